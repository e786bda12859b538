//! Helpers shared by the integration suites.

#![allow(dead_code)]

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tem_core::encoder::EncoderModel;
use tem_core::textenc::build_vocab;
use tem_core::trainer::{mnr_loss, mnr_loss_grad, TrainBatch};

const WORDS: &[&str] = &[
    "yield", "curve", "spread", "equity", "index", "volatility", "option", "strike", "gold",
    "oil", "bond", "rate", "inflation", "payroll", "dollar", "euro", "swap", "credit",
];

pub fn random_text(rng: &mut ChaCha8Rng) -> String {
    let len = rng.random_range(2..8);
    (0..len)
        .map(|_| *WORDS.choose(rng).unwrap())
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn setup(seed: u64) -> (EncoderModel, TrainBatch) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vocab = build_vocab(&[WORDS.join(" ")], 1);
    let model = EncoderModel::init(vocab, 8, 6, seed).unwrap();
    let anchors = (0..5).map(|_| random_text(&mut rng)).collect();
    let positives = (0..5).map(|_| random_text(&mut rng)).collect();
    (model, TrainBatch::new(anchors, positives))
}

pub fn numeric(model: &EncoderModel, batch: &TrainBatch, scale: f64, tensor: usize, index: usize, h: f64) -> f64 {
    let mut plus = model.clone();
    plus.params_mut()[tensor][index] += h;
    let mut minus = model.clone();
    minus.params_mut()[tensor][index] -= h;
    (mnr_loss(&plus, batch, scale).loss - mnr_loss(&minus, batch, scale).loss) / (2.0 * h)
}

/// Worst relative error over `per_seed` sampled coordinates per seed.
pub fn worst_relative_error(seeds: u64, per_seed: usize, scale: f64) -> (f64, usize) {
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for seed in 0..seeds {
        let (model, batch) = setup(seed);
        let (_, grads) = mnr_loss_grad(&model, &batch, scale);
        let analytic = [grads.token_emb.as_slice().to_vec(), grads.projection.as_slice().to_vec()];
        let mut candidates: Vec<(usize, usize)> = analytic
            .iter()
            .enumerate()
            .flat_map(|(t, g)| g.iter().enumerate().filter(|(_, v)| v.abs() > 1e-4).map(move |(i, _)| (t, i)))
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        candidates.sort();
        let picks: Vec<(usize, usize)> = candidates.choose_multiple(&mut rng, per_seed).copied().collect();
        assert!(picks.len() >= per_seed.min(20), "seed {seed}: only {} usable coordinates", picks.len());
        for (t, i) in picks {
            let a = analytic[t][i];
            let n = numeric(&model, &batch, scale, t, i, 1e-6);
            let rel = (a - n).abs() / a.abs().max(n.abs());
            worst = worst.max(rel);
            checked += 1;
        }
    }
    (worst, checked)
}
