//! Exhaustive search against a full-sort oracle, and metric identities.

use std::collections::BTreeSet;

use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tem_core::corpus::{Corpus, QuerySample};
use tem_core::datagen::{synth_generate, SynthConfig};
use tem_core::encoder::EncoderModel;
use tem_core::evaluator::{evaluate, hit_at_k, precision_at_k, recall_at_k, EvalReport, SampleResult};
use tem_core::retrieval::{build_index, DescriptorIndex};
use tem_core::tensor::{dot, Matrix};
use tem_core::textenc::build_vocab;

fn fixture(seed: u64, files: usize) -> (Corpus, Vec<QuerySample>, EncoderModel) {
    let (corpus, samples) = synth_generate(&SynthConfig::new(files, 40, 3, seed).with_noise(0.3)).unwrap();
    let mut texts: Vec<String> = corpus.descriptors().iter().map(|d| d.render_text()).collect();
    texts.extend(samples.iter().map(|s| s.question.clone()));
    let model = EncoderModel::init(build_vocab(&texts, 1), 12, 8, seed).unwrap();
    (corpus, samples, model)
}

/// Scores every row, sorts all of them, truncates.
fn oracle_topk(index: &DescriptorIndex, query: &[f64], k: usize) -> Vec<(String, f64)> {
    let mut all: Vec<(String, f64)> = index
        .file_ids()
        .iter()
        .zip(index.vectors().iter_rows())
        .map(|(id, row)| (id.clone(), dot(row, query).clamp(-1.0, 1.0)))
        .collect();
    all.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(&b.0)));
    all.truncate(k);
    all
}

#[test]
fn topk_equals_full_sort_truncation() {
    let mut queries = 0;
    for seed in 0..6 {
        let (corpus, samples, model) = fixture(seed, 15);
        let index = build_index(&model, &corpus);
        for s in &samples {
            let q = model.encode(&s.question);
            for k in 1..=corpus.len() + 2 {
                let got = index.search_topk(&model, &s.question, k).unwrap();
                let want = oracle_topk(&index, q.as_slice(), k);
                let got: Vec<(String, f64)> = got.hits.into_iter().map(|h| (h.file_id, h.score)).collect();
                assert_eq!(got, want, "seed {seed} k {k} query {:?}", s.question);
            }
            queries += 1;
        }
    }
    assert!(queries >= 200);
}

#[test]
fn results_ignore_corpus_order() {
    for seed in 0..4 {
        let (corpus, samples, model) = fixture(seed, 12);
        let mut shuffled = corpus.descriptors().to_vec();
        shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let permuted = Corpus::new(shuffled).unwrap();
        let a = build_index(&model, &corpus);
        let b = build_index(&model, &permuted);
        for s in &samples {
            assert_eq!(
                a.search_topk(&model, &s.question, 5).unwrap(),
                b.search_topk(&model, &s.question, 5).unwrap()
            );
        }
    }
}

#[test]
fn exact_ties_are_ordered_by_file_id() {
    let dim = 8;
    let rows = vec![vec![1.0 / (dim as f64).sqrt(); dim]; 4];
    let ids: Vec<String> = ["d", "a", "c", "b"].iter().map(|s| s.to_string()).collect();
    let flat = DescriptorIndex::from_parts(ids, Matrix::from_rows(&rows).unwrap(), "fp".into()).unwrap();
    let r = flat.search_vector("q", &rows[0], 3).unwrap();
    assert_eq!(r.file_ids(), vec!["a", "b", "c"]);
}

#[test]
fn k_at_least_corpus_size_retrieves_everything() {
    let (corpus, samples, model) = fixture(5, 10);
    let index = build_index(&model, &corpus);
    let report = evaluate(&index, &model, &samples, corpus.len()).unwrap();
    assert_eq!(report.recall, 1.0);
    assert_eq!(report.hit_rate, 1.0);
}

fn ids(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("f{i:02}")).collect()
}

fn relevant_and_retrieved() -> impl Strategy<Value = (BTreeSet<String>, Vec<String>, usize)> {
    (1usize..=6, 1usize..=12, any::<u64>()).prop_map(|(n, k, seed)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut pool = ids(15);
        pool.shuffle(&mut rng);
        let relevant: BTreeSet<String> = pool[..n].iter().cloned().collect();
        pool.shuffle(&mut rng);
        let len = rng.random_range(0..=k);
        (relevant, pool[..len].to_vec(), k)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn metric_identities((relevant, retrieved, k) in relevant_and_retrieved()) {
        let p = precision_at_k(&relevant, &retrieved, k).unwrap();
        let r = recall_at_k(&relevant, &retrieved, k).unwrap();
        let h = hit_at_k(&relevant, &retrieved, k).unwrap();
        prop_assert_eq!(h == 1, r == 1.0);
        prop_assert!(f64::from(h) <= r);
        let n = relevant.len() as f64;
        prop_assert!(p <= (n / k as f64).min(1.0) + 1e-15);

        // Direct count.
        let found = retrieved.iter().filter(|f| relevant.contains(*f)).count() as f64;
        prop_assert_eq!(p, found / k as f64);
        prop_assert_eq!(r, found / n);

        let mut reversed = retrieved.clone();
        reversed.reverse();
        prop_assert_eq!(p, precision_at_k(&relevant, &reversed, k).unwrap());
        prop_assert_eq!(r, recall_at_k(&relevant, &reversed, k).unwrap());
        prop_assert_eq!(h, hit_at_k(&relevant, &reversed, k).unwrap());
    }

    #[test]
    fn weighted_per_n_mean_matches_aggregate(cases in prop::collection::vec(relevant_and_retrieved(), 1..60)) {
        let k = 5;
        let results: Vec<SampleResult> = cases
            .into_iter()
            .map(|(relevant, retrieved, _)| {
                let sample = QuerySample::new("q", relevant);
                let retrieved: Vec<String> = retrieved.into_iter().take(k).collect();
                SampleResult::score(&sample, retrieved, k).unwrap()
            })
            .collect();
        let report = EvalReport::from_results(&results, k).unwrap();
        report.check_invariants().unwrap();
        let weighted: f64 = report.per_n.values().map(|b| b.hit_rate * b.count as f64).sum::<f64>()
            / report.sample_count as f64;
        prop_assert!((weighted - report.hit_rate).abs() <= 1e-12);
    }
}

#[test]
fn hand_computed_metrics() {
    let rel: BTreeSet<String> = ["a", "b", "c", "d"].iter().map(|s| s.to_string()).collect();
    let all: Vec<String> = ["a", "b", "c", "d", "e", "f", "g", "h", "i", "j"].iter().map(|s| s.to_string()).collect();
    assert_eq!(precision_at_k(&rel, &all, 10).unwrap(), 0.4);
    let partial: Vec<String> = ["a", "x", "c"].iter().map(|s| s.to_string()).collect();
    assert_eq!(recall_at_k(&rel, &partial, 10).unwrap(), 0.5);
    assert_eq!(hit_at_k(&rel, &partial, 10).unwrap(), 0);
}
