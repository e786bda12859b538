//! Single-step softmax language model `p(w) = exp(h·m_w) / Z`.
//!
//! `h` is a fixed context vector and `m_w` the embedding row of token `w`;
//! `Z = Σ_j exp(h·m_j)` is the partition function over the vocabulary.
//! Appending a token with embedding `m'` turns the normalizer into
//! `Z + exp(h·m')` and scales every existing probability by
//! `1 / (1 + exp(h·m')/Z)`. The divergence between the original distribution
//! and the expanded one is then `ln(1 + exp(h·m')/Z)`. When `m'` is the row
//! mean, Jensen's inequality gives `exp(h·m') ≤ Z/n`, so the divergence never
//! exceeds [`kl_bound`]`(n) = ln(1 + 1/n)`.

use thiserror::Error;

use crate::tensor::{dot, log_sum_exp, Matrix};

/// Logits are clamped to this magnitude before exponentiation.
pub const LOGIT_CLAMP: f64 = 700.0;

#[derive(Debug, Error, PartialEq)]
pub enum ToyLmError {
    #[error("context has dimension {context} but embeddings have {embedding}")]
    DimensionMismatch { context: usize, embedding: usize },
    #[error("embedding matrix has no rows")]
    Empty,
    #[error("non-finite context or embedding entry")]
    NonFinite,
    #[error("kl_bound requires n >= 1")]
    ZeroVocabulary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToySoftmaxLM {
    context: Vec<f64>,
    embeddings: Matrix,
}

impl ToySoftmaxLM {
    pub fn new(context: Vec<f64>, embeddings: Matrix) -> Result<Self, ToyLmError> {
        if embeddings.rows() == 0 {
            return Err(ToyLmError::Empty);
        }
        if context.len() != embeddings.cols() {
            return Err(ToyLmError::DimensionMismatch {
                context: context.len(),
                embedding: embeddings.cols(),
            });
        }
        if !embeddings.is_finite() || context.iter().any(|v| !v.is_finite()) {
            return Err(ToyLmError::NonFinite);
        }
        Ok(Self {
            context,
            embeddings,
        })
    }

    pub fn context(&self) -> &[f64] {
        &self.context
    }

    pub fn embeddings(&self) -> &Matrix {
        &self.embeddings
    }

    pub fn vocab_size(&self) -> usize {
        self.embeddings.rows()
    }

    /// Clamped logit `h·m` for an arbitrary row.
    pub fn logit(&self, row: &[f64]) -> f64 {
        dot(&self.context, row).clamp(-LOGIT_CLAMP, LOGIT_CLAMP)
    }

    pub fn logits(&self) -> Vec<f64> {
        self.embeddings.iter_rows().map(|r| self.logit(r)).collect()
    }

    /// `ln Z`.
    pub fn log_partition(&self) -> f64 {
        log_sum_exp(&self.logits())
    }

    /// `Z` itself; may overflow to infinity for extreme logits, unlike
    /// [`Self::log_partition`].
    pub fn partition(&self) -> f64 {
        self.log_partition().exp()
    }

    /// Next-token distribution, computed with max-subtraction.
    pub fn distribution(&self) -> Vec<f64> {
        softmax(&self.logits())
    }

    /// Divergence between this model's distribution and the one obtained by
    /// appending `new_row` as an extra token: `ln(1 + exp(h·m')/Z)`.
    ///
    /// The sum runs over the original vocabulary, the only support the
    /// original model assigns mass to.
    pub fn kl_post_expansion(&self, new_row: &[f64]) -> f64 {
        let a = self.logit(new_row) - self.log_partition();
        // ln(1 + e^a), stable at both ends.
        if a > 0.0 {
            a + (-a).exp().ln_1p()
        } else {
            a.exp().ln_1p()
        }
    }

    /// The model after appending `new_row` to the vocabulary.
    pub fn expanded(&self, new_row: &[f64]) -> Result<Self, ToyLmError> {
        let mut emb = self.embeddings.clone();
        let extra = Matrix::from_vec(1, new_row.len(), new_row.to_vec()).ok_or(ToyLmError::Empty)?;
        if extra.cols() != emb.cols() {
            return Err(ToyLmError::DimensionMismatch {
                context: self.context.len(),
                embedding: extra.cols(),
            });
        }
        emb.append_rows(&extra);
        Self::new(self.context.clone(), emb)
    }
}

/// Max-shifted softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// `ln(1 + 1/n)`: the divergence ceiling for mean-initialized expansion of an
/// `n`-token vocabulary.
pub fn kl_bound(n: usize) -> Result<f64, ToyLmError> {
    if n == 0 {
        return Err(ToyLmError::ZeroVocabulary);
    }
    Ok((1.0 / n as f64).ln_1p())
}
