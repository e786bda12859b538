//! Training loop, schedule and optimizer.

use proptest::prelude::*;
use tem_core::corpus::{Corpus, QuerySample};
use tem_core::datagen::{synth_generate, SynthConfig};
use tem_core::encoder::EncoderModel;
use tem_core::textenc::build_vocab;
use tem_core::trainer::{
    adamw_step, epoch_means, lr_at_step, mnr_loss, plan_epoch, train, warmup_steps, OptimizerState, TrainBatch,
    TrainConfig,
};

fn setup(questions: usize, seed: u64) -> (Corpus, Vec<QuerySample>, EncoderModel) {
    let (corpus, samples) = synth_generate(&SynthConfig::new(12, questions, 3, seed).with_noise(0.3)).unwrap();
    let mut texts: Vec<String> = corpus.descriptors().iter().map(|d| d.render_text()).collect();
    texts.extend(samples.iter().map(|s| s.question.clone()));
    let model = EncoderModel::init(build_vocab(&texts, 1), 16, 16, seed).unwrap();
    (corpus, samples, model)
}

fn small_config(seed: u64) -> TrainConfig {
    TrainConfig {
        epochs: 6,
        seed,
        ..TrainConfig::default()
    }
}

#[test]
fn training_is_deterministic() {
    let (corpus, samples, model) = setup(40, 1);
    let (a, ha) = train(model.clone(), &samples, &corpus, &small_config(3)).unwrap();
    let (b, hb) = train(model.clone(), &samples, &corpus, &small_config(3)).unwrap();
    assert_eq!(a.to_bytes(), b.to_bytes());
    assert_eq!(ha, hb);
    let (c, _) = train(model, &samples, &corpus, &small_config(4)).unwrap();
    assert_ne!(a.to_bytes(), c.to_bytes());
}

#[test]
fn loss_decreases() {
    let (corpus, samples, model) = setup(60, 2);
    let (_, history) = train(model, &samples, &corpus, &TrainConfig { epochs: 15, ..small_config(0) }).unwrap();
    let means = epoch_means(&history);
    assert!(means.last().unwrap() < &(0.5 * means[0]), "{means:?}");
}

#[test]
fn history_has_one_row_per_step_and_follows_schedule() {
    // One question per file: no two samples share a positive, so every epoch
    // is ⌈S/N⌉ batches.
    let (corpus, _) = synth_generate(&SynthConfig::new(42, 1, 1, 3)).unwrap();
    let samples: Vec<QuerySample> = corpus
        .descriptors()
        .iter()
        .map(|d| QuerySample::new(format!("what is in {}", d.name), [d.file_id.clone()]))
        .collect();
    let texts: Vec<String> = corpus.descriptors().iter().map(|d| d.render_text()).collect();
    let model = EncoderModel::init(build_vocab(&texts, 1), 8, 8, 0).unwrap();
    let config = small_config(5);
    let (_, history) = train(model, &samples, &corpus, &config).unwrap();
    let total = history.len();
    assert_eq!(total, config.epochs * 42usize.div_ceil(5));
    for (i, r) in history.iter().enumerate() {
        assert_eq!(r.step, i + 1);
        assert_eq!(r.lr, lr_at_step(r.step, total, &config).unwrap());
        assert!(r.loss.is_finite() && r.loss >= 0.0);
    }
    assert_eq!(history.last().unwrap().lr, 0.0);
}

#[test]
fn too_few_samples_is_an_error() {
    let (corpus, samples, model) = setup(4, 0);
    assert!(train(model, &samples, &corpus, &small_config(0)).is_err());
}

#[test]
fn uniform_similarity_gives_ln_n() {
    let (_, _, model) = setup(5, 0);
    for n in 2..=8 {
        let t = vec!["same words".to_string(); n];
        let loss = mnr_loss(&model, &TrainBatch::new(t.clone(), t), 20.0).loss;
        assert!((loss - (n as f64).ln()).abs() < 1e-12);
    }
}

#[test]
fn schedule_closed_form() {
    let config = TrainConfig::default();
    for total in [2usize, 3, 10, 97, 1000] {
        let w = warmup_steps(total, &config);
        assert!(w >= 1 && w < total);
        assert_eq!(lr_at_step(w, total, &config).unwrap(), config.peak_lr);
        assert_eq!(lr_at_step(total, total, &config).unwrap(), 0.0);
        for t in 0..=total {
            let expected = if t <= w {
                config.peak_lr * t as f64 / w as f64
            } else {
                config.peak_lr * (1.0 - (t - w) as f64 / (total - w) as f64)
            };
            let got = lr_at_step(t, total, &config).unwrap();
            assert!((got - expected).abs() <= 1e-15, "t {t} of {total}");
        }
    }
}

proptest! {
    #[test]
    fn zero_gradient_step_is_pure_decay(
        weights in prop::collection::vec(-10.0f64..10.0, 1..40),
        lr in 0.0f64..0.1,
        decay in 0.0f64..0.5,
    ) {
        let config = TrainConfig { weight_decay: decay, ..TrainConfig::default() };
        let mut w = weights.clone();
        let zeros = vec![0.0; w.len()];
        let mut state = OptimizerState::new(&[w.len()]);
        adamw_step(&mut [&mut w[..]], &[&zeros[..]], &mut state, lr, &config).unwrap();
        for (after, before) in w.iter().zip(&weights) {
            prop_assert_eq!(*after, before * (1.0 - lr * decay));
        }
    }

    #[test]
    fn batches_never_repeat_a_positive(keys in prop::collection::vec(0usize..6, 2..60), size in 2usize..7) {
        let order: Vec<usize> = (0..keys.len()).collect();
        let batches = plan_epoch(&order, &keys, size);
        let mut seen = vec![0; keys.len()];
        for b in &batches {
            prop_assert!(b.len() >= 2 && b.len() <= size);
            let mut ks: Vec<usize> = b.iter().map(|&i| keys[i]).collect();
            ks.sort();
            ks.dedup();
            prop_assert_eq!(ks.len(), b.len());
            for &i in b {
                seen[i] += 1;
            }
        }
        prop_assert!(seen.iter().all(|&c| c <= 1));
    }
}

#[test]
fn first_adam_step_has_unit_magnitude() {
    // Bias correction makes the first update exactly lr·g/(|g| + ε).
    let config = TrainConfig { weight_decay: 0.0, ..TrainConfig::default() };
    let mut w = vec![1.0, -2.0, 0.5];
    let g = vec![0.3, -4.0, 0.0];
    let mut state = OptimizerState::new(&[3]);
    adamw_step(&mut [&mut w[..]], &[&g[..]], &mut state, 0.01, &config).unwrap();
    let expect = |w0: f64, g: f64| w0 - 0.01 * g / (g.abs() + config.adam_eps);
    assert!((w[0] - expect(1.0, 0.3)).abs() < 1e-15);
    assert!((w[1] - expect(-2.0, -4.0)).abs() < 1e-15);
    assert_eq!(w[2], 0.5);
}
