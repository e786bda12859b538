//! Fine-tuning the encoder on question → relevant-files pairs.
//!
//! Each question is an anchor; its positive is the concatenated descriptor
//! text of its relevant files. Batches are scored with the multiple-negatives
//! ranking loss ([`mnr_loss`]) and weights updated with AdamW
//! ([`adamw_step`]) under a linear warmup / linear decay schedule
//! ([`lr_at_step`]).

mod loss;
mod optim;
mod schedule;

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{ConfigError, KeyValues};
use crate::corpus::{Corpus, QuerySample};
use crate::encoder::EncoderModel;

pub use loss::{mnr_loss, mnr_loss_grad, MnrLoss, TrainBatch};
pub use optim::{adamw_step, OptimizerState};
pub use schedule::{lr_at_step, warmup_steps};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("need at least {needed} samples (batch size), got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("sample {index}: relevant file '{file_id}' not in corpus")]
    UnknownFile { index: usize, file_id: String },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error(transparent)]
    ConfigFile(#[from] ConfigError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub peak_lr: f64,
    pub weight_decay: f64,
    pub warmup_fraction: f64,
    /// Multiplier applied to cosine similarities before the softmax.
    /// `1.0` gives the unscaled loss.
    pub similarity_scale: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 5,
            epochs: 50,
            peak_lr: 2e-3,
            weight_decay: 0.01,
            warmup_fraction: 0.1,
            similarity_scale: 20.0,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub const KEYS: &'static [&'static str] = &[
        "batch_size",
        "epochs",
        "peak_lr",
        "weight_decay",
        "warmup_fraction",
        "similarity_scale",
        "adam_beta1",
        "adam_beta2",
        "adam_eps",
        "seed",
    ];

    /// Overrides fields present in `kv`; keys outside [`Self::KEYS`] are ignored.
    pub fn apply(&mut self, kv: &KeyValues) -> Result<(), TrainError> {
        macro_rules! take {
            ($($field:ident),*) => {
                $(if let Some(v) = kv.parse_value(stringify!($field))? {
                    self.$field = v;
                })*
            };
        }
        take!(
            batch_size,
            epochs,
            peak_lr,
            weight_decay,
            warmup_fraction,
            similarity_scale,
            adam_beta1,
            adam_beta2,
            adam_eps,
            seed
        );
        Ok(())
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::Config(m.to_string()));
        if self.batch_size < 2 {
            return bad("batch_size must be >= 2 (in-batch negatives)");
        }
        if self.epochs == 0 {
            return bad("epochs must be >= 1");
        }
        if !(self.peak_lr > 0.0 && self.peak_lr.is_finite()) {
            return bad("peak_lr must be positive");
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad("weight_decay must be nonnegative");
        }
        if !(0.0..1.0).contains(&self.warmup_fraction) {
            return bad("warmup_fraction must be in [0, 1)");
        }
        if !(self.similarity_scale > 0.0 && self.similarity_scale.is_finite()) {
            return bad("similarity_scale must be positive");
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return bad("adam betas must be in [0, 1)");
        }
        if self.adam_eps <= 0.0 {
            return bad("adam_eps must be positive");
        }
        Ok(())
    }

    /// Fields as `key=value` pairs in [`Self::KEYS`] order.
    pub fn to_key_values(&self) -> KeyValues {
        let mut kv = KeyValues::default();
        let json = serde_json::to_value(self).expect("config serializes");
        for key in Self::KEYS {
            kv.set(*key, json[key].to_string());
        }
        kv
    }
}

/// One optimizer step in the loss history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub epoch: usize,
    pub lr: f64,
    pub loss: f64,
}

/// `step,epoch,lr,loss` CSV with a header line.
pub fn history_csv(history: &[StepRecord]) -> String {
    let mut out = String::from("step,epoch,lr,loss\n");
    for r in history {
        out.push_str(&format!("{},{},{},{}\n", r.step, r.epoch, r.lr, r.loss));
    }
    out
}

/// Splits one epoch's shuffled order into batches of at most `batch_size`
/// samples with pairwise distinct positive contexts.
///
/// A sample whose positive already appears in the batch under construction
/// is deferred to the front of the next batch. Batches of a single sample
/// (no negatives) are dropped.
pub fn plan_epoch(order: &[usize], positive_key: &[usize], batch_size: usize) -> Vec<Vec<usize>> {
    let mut pending: std::collections::VecDeque<usize> = order.iter().copied().collect();
    let mut batches = Vec::new();
    while !pending.is_empty() {
        let mut batch: Vec<usize> = Vec::with_capacity(batch_size);
        let mut deferred = Vec::new();
        while batch.len() < batch_size {
            let Some(s) = pending.pop_front() else { break };
            if batch.iter().any(|&b| positive_key[b] == positive_key[s]) {
                deferred.push(s);
            } else {
                batch.push(s);
            }
        }
        for s in deferred.into_iter().rev() {
            pending.push_front(s);
        }
        if batch.len() >= 2 {
            batches.push(batch);
        }
    }
    batches
}

/// Fine-tunes `model` and returns it with the per-step loss history.
///
/// `(config, samples, corpus, initial model)` fully determine the result.
pub fn train(
    mut model: EncoderModel,
    samples: &[QuerySample],
    corpus: &Corpus,
    config: &TrainConfig,
) -> Result<(EncoderModel, Vec<StepRecord>), TrainError> {
    config.validate()?;
    if samples.len() < config.batch_size {
        return Err(TrainError::TooFewSamples {
            needed: config.batch_size,
            got: samples.len(),
        });
    }
    let mut positive_key = Vec::with_capacity(samples.len());
    let mut anchor_ids = Vec::with_capacity(samples.len());
    let mut positive_ids = Vec::with_capacity(samples.len());
    let mut keys: HashMap<String, usize> = HashMap::new();
    for (index, s) in samples.iter().enumerate() {
        if let Some(missing) = s.relevant_files.iter().find(|id| !corpus.contains(id)) {
            return Err(TrainError::UnknownFile {
                index,
                file_id: missing.clone(),
            });
        }
        let context = corpus.context_text(s).expect("ids checked above");
        let next = keys.len();
        positive_key.push(*keys.entry(context.clone()).or_insert(next));
        anchor_ids.push(model.vocab().encode(&s.question));
        positive_ids.push(model.vocab().encode(&context));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut plan = Vec::with_capacity(config.epochs);
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        plan.push(plan_epoch(&order, &positive_key, config.batch_size));
    }
    let total: usize = plan.iter().map(Vec::len).sum();
    if total == 0 {
        return Err(TrainError::Config(
            "no batch with two distinct positive contexts could be formed".into(),
        ));
    }

    let sizes = [model.token_emb().as_slice().len(), model.projection().as_slice().len()];
    let mut state = OptimizerState::new(&sizes);
    let mut history = Vec::with_capacity(total);
    let mut step = 0;
    for (epoch, batches) in plan.iter().enumerate() {
        for batch in batches {
            step += 1;
            let a: Vec<Vec<u32>> = batch.iter().map(|&i| anchor_ids[i].clone()).collect();
            let p: Vec<Vec<u32>> = batch.iter().map(|&i| positive_ids[i].clone()).collect();
            let (loss, grads) = loss::loss_and_grad_ids(&model, &a, &p, config.similarity_scale);
            let lr = lr_at_step(step, total, config)?;
            let [tok, proj] = model.params_mut();
            adamw_step(
                &mut [tok, proj],
                &[grads.token_emb.as_slice(), grads.projection.as_slice()],
                &mut state,
                lr,
                config,
            )?;
            history.push(StepRecord {
                step,
                epoch: epoch + 1,
                lr,
                loss: loss.loss,
            });
        }
    }
    Ok((model, history))
}

/// Mean loss per epoch, in epoch order.
pub fn epoch_means(history: &[StepRecord]) -> Vec<f64> {
    let mut sums: Vec<(f64, usize)> = Vec::new();
    for r in history {
        if sums.len() < r.epoch {
            sums.resize(r.epoch, (0.0, 0));
        }
        let e = &mut sums[r.epoch - 1];
        e.0 += r.loss;
        e.1 += 1;
    }
    sums.into_iter()
        .map(|(s, c)| if c == 0 { f64::NAN } else { s / c as f64 })
        .collect()
}
