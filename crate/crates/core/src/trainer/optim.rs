//! AdamW with decoupled weight decay.
//!
//! Per step: `m ← β₁m + (1−β₁)g`, `v ← β₂v + (1−β₂)g²`, bias-corrected
//! `m̂ = m/(1−β₁ᵗ)`, `v̂ = v/(1−β₂ᵗ)`, then
//! `W ← W·(1 − η_t λ) − η_t m̂/(√v̂ + ε)`. Decay is subtracted and applied to
//! every trainable tensor.

use super::{TrainConfig, TrainError};

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl OptimizerState {
    /// Zeroed moments for tensors of the given lengths.
    pub fn new(sizes: &[usize]) -> Self {
        Self {
            step: 0,
            first: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            second: sizes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn first_moments(&self) -> &[Vec<f64>] {
        &self.first
    }

    pub fn second_moments(&self) -> &[Vec<f64>] {
        &self.second
    }
}

pub fn adamw_step(
    weights: &mut [&mut [f64]],
    grads: &[&[f64]],
    state: &mut OptimizerState,
    lr: f64,
    config: &TrainConfig,
) -> Result<(), TrainError> {
    if weights.len() != grads.len() || weights.len() != state.first.len() {
        return Err(TrainError::Shape(format!(
            "{} weight tensors, {} gradients, {} moment slots",
            weights.len(),
            grads.len(),
            state.first.len()
        )));
    }
    for (i, (w, g)) in weights.iter().zip(grads).enumerate() {
        if w.len() != g.len() || w.len() != state.first[i].len() {
            return Err(TrainError::Shape(format!(
                "tensor {i}: {} weights, {} gradients, {} moments",
                w.len(),
                g.len(),
                state.first[i].len()
            )));
        }
    }

    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (config.adam_beta1, config.adam_beta2);
    let bc1 = 1.0 - b1.powi(t);
    let bc2 = 1.0 - b2.powi(t);
    let decay = 1.0 - lr * config.weight_decay;

    for ((w, g), (m, v)) in weights
        .iter_mut()
        .zip(grads)
        .zip(state.first.iter_mut().zip(state.second.iter_mut()))
    {
        for j in 0..w.len() {
            let gj = g[j];
            m[j] = b1 * m[j] + (1.0 - b1) * gj;
            v[j] = b2 * v[j] + (1.0 - b2) * gj * gj;
            let m_hat = m[j] / bc1;
            let v_hat = v[j] / bc2;
            w[j] = w[j] * decay - lr * (m_hat / (v_hat.sqrt() + config.adam_eps));
        }
    }
    Ok(())
}
