//! Multiple-negatives ranking (in-batch softmax) loss.
//!
//! For a batch of `N` (anchor, positive) pairs with `S_ij = s · cos(q_i, p_j)`:
//!
//! ```text
//! L_i = −ln( exp(S_ii) / Σ_j exp(S_ij) ) = logsumexp_j(S_ij) − S_ii
//! L   = (1/N) Σ_i L_i
//! ```
//!
//! Every other positive in the batch acts as a negative for anchor `i`.

use crate::encoder::{EncoderModel, Forward, Gradients};
use crate::tensor::{dot, log_sum_exp};

/// Anchor questions and their positive contexts, aligned by index.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainBatch {
    pub anchors: Vec<String>,
    pub positives: Vec<String>,
}

impl TrainBatch {
    pub fn new(anchors: Vec<String>, positives: Vec<String>) -> Self {
        assert_eq!(anchors.len(), positives.len(), "anchors/positives length mismatch");
        Self { anchors, positives }
    }

    pub fn len(&self) -> usize {
        self.anchors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.anchors.is_empty()
    }

    fn ids(&self, model: &EncoderModel) -> (Vec<Vec<u32>>, Vec<Vec<u32>>) {
        let enc = |texts: &[String]| texts.iter().map(|t| model.vocab().encode(t)).collect();
        (enc(&self.anchors), enc(&self.positives))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MnrLoss {
    pub loss: f64,
    pub per_sample: Vec<f64>,
}

struct Scored {
    anchors: Vec<Forward>,
    positives: Vec<Forward>,
    /// Row-wise softmax of the scaled similarity matrix.
    probs: Vec<Vec<f64>>,
    loss: MnrLoss,
}

fn score(model: &EncoderModel, anchor_ids: &[Vec<u32>], positive_ids: &[Vec<u32>], scale: f64) -> Scored {
    let anchors: Vec<Forward> = anchor_ids.iter().map(|ids| model.forward(ids)).collect();
    let positives: Vec<Forward> = positive_ids.iter().map(|ids| model.forward(ids)).collect();
    let n = anchors.len();
    let mut probs = Vec::with_capacity(n);
    let mut per_sample = Vec::with_capacity(n);
    for (i, q) in anchors.iter().enumerate() {
        let row: Vec<f64> = positives
            .iter()
            .map(|p| scale * dot(q.output.as_slice(), p.output.as_slice()).clamp(-1.0, 1.0))
            .collect();
        let lse = log_sum_exp(&row);
        per_sample.push((lse - row[i]).max(0.0));
        probs.push(row.iter().map(|s| (s - lse).exp()).collect());
    }
    let loss = per_sample.iter().sum::<f64>() / n as f64;
    Scored {
        anchors,
        positives,
        probs,
        loss: MnrLoss { loss, per_sample },
    }
}

/// Batch-mean loss and per-sample losses.
pub fn mnr_loss(model: &EncoderModel, batch: &TrainBatch, scale: f64) -> MnrLoss {
    let (a, p) = batch.ids(model);
    score(model, &a, &p, scale).loss
}

/// Loss plus exact gradients with respect to the token embeddings and the
/// projection. The cosine clamp is treated as the identity.
pub fn mnr_loss_grad(model: &EncoderModel, batch: &TrainBatch, scale: f64) -> (MnrLoss, Gradients) {
    let (a, p) = batch.ids(model);
    loss_and_grad_ids(model, &a, &p, scale)
}

pub(crate) fn loss_and_grad_ids(
    model: &EncoderModel,
    anchor_ids: &[Vec<u32>],
    positive_ids: &[Vec<u32>],
    scale: f64,
) -> (MnrLoss, Gradients) {
    let scored = score(model, anchor_ids, positive_ids, scale);
    let n = scored.anchors.len();
    let d = model.d_out();
    let inv_n = 1.0 / n as f64;

    // ∂L/∂S_ij = (softmax_ij − δ_ij) / N
    let coef = |i: usize, j: usize| {
        let delta = if i == j { 1.0 } else { 0.0 };
        (scored.probs[i][j] - delta) * inv_n * scale
    };
    let mut grad_q = vec![vec![0.0; d]; n];
    let mut grad_p = vec![vec![0.0; d]; n];
    for i in 0..n {
        for j in 0..n {
            let c = coef(i, j);
            let q = scored.anchors[i].output.as_slice();
            let p = scored.positives[j].output.as_slice();
            for k in 0..d {
                grad_q[i][k] += c * p[k];
                grad_p[j][k] += c * q[k];
            }
        }
    }

    let mut grads = Gradients::zeros_like(model);
    for (fwd, g) in scored.anchors.iter().zip(&grad_q) {
        model.backward(fwd, g, &mut grads);
    }
    for (fwd, g) in scored.positives.iter().zip(&grad_p) {
        model.backward(fwd, g, &mut grads);
    }
    (scored.loss, grads)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::textenc::build_vocab;

    fn model() -> EncoderModel {
        let vocab = build_vocab(&["alpha beta gamma delta epsilon zeta eta theta"], 1);
        EncoderModel::init(vocab, 6, 5, 17).unwrap()
    }

    #[test]
    fn identical_texts_give_ln_n() {
        let m = model();
        let text = "alpha beta".to_string();
        let batch = TrainBatch::new(vec![text.clone(); 5], vec![text; 5]);
        let out = mnr_loss(&m, &batch, 20.0);
        assert!((out.loss - 5f64.ln()).abs() < 1e-12);
        assert!(out.per_sample.iter().all(|l| (l - 5f64.ln()).abs() < 1e-12));
    }

    #[test]
    fn losses_are_nonnegative() {
        let m = model();
        let batch = TrainBatch::new(
            vec!["alpha".into(), "beta gamma".into(), "delta".into()],
            vec!["alpha".into(), "beta".into(), "zeta eta".into()],
        );
        let out = mnr_loss(&m, &batch, 20.0);
        assert!(out.per_sample.iter().all(|&l| l >= 0.0));
        assert!(out.loss >= 0.0);
    }

    #[test]
    fn untouched_tokens_have_zero_gradient() {
        let m = model();
        let batch = TrainBatch::new(
            vec!["alpha".into(), "beta".into()],
            vec!["gamma".into(), "delta".into()],
        );
        let (_, g) = mnr_loss_grad(&m, &batch, 20.0);
        for tok in ["epsilon", "zeta", "eta", "theta"] {
            let id = m.vocab().id(tok).unwrap() as usize;
            assert!(g.token_emb.row(id).iter().all(|&v| v == 0.0), "{tok}");
        }
        let alpha = m.vocab().id("alpha").unwrap() as usize;
        assert!(g.token_emb.row(alpha).iter().any(|&v| v != 0.0));
    }
}
