//! Dataset generation against scripted clients, checked by direct simulation.

use std::collections::HashSet;

use proptest::prelude::*;
use tem_core::corpus::{parse_dataset, to_jsonl, Corpus};
use tem_core::datagen::{
    build_prompt, clients, generate_dataset, synth_generate, synth_generate_with_words, ClientContext,
    GenerationConfig, GenerationErrorKind, LlmError, PlanEntry, Role, ScriptedClient, SynthConfig, TemplateClient,
    MAX_RETRIES,
};
use tem_core::textenc::tokenize;

fn corpus() -> Corpus {
    synth_generate(&SynthConfig::new(6, 1, 1, 11)).unwrap().0
}

fn valid(corpus: &Corpus, n: usize, i: usize) -> String {
    let files: Vec<&str> = corpus.file_ids().take(n).collect();
    serde_json::json!({"question": format!("question {i}"), "relevant_files": files}).to_string()
}

/// Replays the retry policy by hand: each requested sample consumes
/// responses until one is valid or `1 + MAX_RETRIES` have been used.
fn simulate(pattern: &[bool], requested: usize) -> (usize, usize) {
    let mut cursor = 0;
    let (mut kept, mut rejected) = (0, 0);
    for _ in 0..requested {
        for _ in 0..=MAX_RETRIES {
            let ok = pattern[cursor];
            cursor += 1;
            if ok {
                kept += 1;
                break;
            }
            rejected += 1;
        }
    }
    (kept, rejected)
}

proptest! {
    #[test]
    fn scripted_outcomes_match_simulation(pattern in prop::collection::vec(any::<bool>(), 40), requested in 1usize..8) {
        let corpus = corpus();
        let script: Vec<Result<String, LlmError>> = pattern
            .iter()
            .enumerate()
            .map(|(i, &ok)| Ok(if ok { valid(&corpus, 2, i) } else { r#"{"question":"q","relevant_files":["ghost","x"]}"#.to_string() }))
            .collect();
        let client = ScriptedClient::new(script);
        let plan = vec![PlanEntry { role: Role::MacroTrader, target_n: 2, count: requested }];
        let out = generate_dataset(&corpus, &client, &plan, &GenerationConfig::default()).unwrap();
        let (kept, rejected) = simulate(&pattern, requested);
        prop_assert_eq!(out.samples.len(), kept);
        prop_assert_eq!(out.rejections.len(), rejected);
        // Everything emitted survives independent validation.
        prop_assert_eq!(parse_dataset(&to_jsonl(&out.samples), &corpus).unwrap(), out.samples);
    }
}

#[test]
fn alternating_client() {
    let corpus = corpus();
    let script = (0..20).map(|i| {
        Ok(if i % 2 == 0 { "not json".to_string() } else { valid(&corpus, 1, i) })
    });
    let client = ScriptedClient::new(script);
    let plan = vec![PlanEntry { role: Role::DataScientist, target_n: 1, count: 10 }];
    let out = generate_dataset(&corpus, &client, &plan, &GenerationConfig::default()).unwrap();
    assert_eq!(out.samples.len(), 10);
    assert_eq!(out.rejections.len(), 10);
    assert!(out.rejections.iter().all(|r| r.attempt == 0 && r.reason.starts_with("parse")));
}

#[test]
fn wrong_file_count_is_rejected() {
    let corpus = corpus();
    let client = ScriptedClient::new([valid(&corpus, 3, 0), valid(&corpus, 2, 1)].map(Ok));
    let plan = vec![PlanEntry { role: Role::FundamentalAnalyst, target_n: 2, count: 1 }];
    let out = generate_dataset(&corpus, &client, &plan, &GenerationConfig::default()).unwrap();
    assert_eq!(out.samples.len(), 1);
    assert_eq!(out.samples[0].n(), 2);
    assert_eq!(out.rejections.len(), 1);
}

#[test]
fn persistent_transport_failure_aborts_with_partial_output() {
    let corpus = corpus();
    let mut script = vec![Ok(valid(&corpus, 1, 0))];
    script.extend((0..=MAX_RETRIES).map(|_| Err(LlmError::Transport("timeout".into()))));
    let client = ScriptedClient::new(script);
    let plan = vec![PlanEntry { role: Role::RetailTrader, target_n: 1, count: 3 }];
    let err = generate_dataset(&corpus, &client, &plan, &GenerationConfig::default()).unwrap_err();
    assert_eq!(err.partial.samples.len(), 1);
    assert_eq!(err.partial.rejections.len(), 1 + MAX_RETRIES);
    assert!(matches!(err.error, GenerationErrorKind::Client(LlmError::Transport(_))));
}

#[test]
fn transient_transport_failure_recovers() {
    let corpus = corpus();
    let script = vec![Err(LlmError::Transport("reset".into())), Ok(valid(&corpus, 1, 0))];
    let client = ScriptedClient::new(script);
    let plan = vec![PlanEntry { role: Role::RetailTrader, target_n: 1, count: 1 }];
    let out = generate_dataset(&corpus, &client, &plan, &GenerationConfig::default()).unwrap();
    assert_eq!(out.samples.len(), 1);
}

#[test]
fn prompt_lists_every_file_once() {
    let corpus = corpus();
    let prompt = build_prompt(&corpus, Role::MachineLearningExpert, 3, &[], "Be concrete.").unwrap().render();
    for id in corpus.file_ids() {
        assert_eq!(prompt.matches(&format!("file_id: {id}\n")).count(), 1, "{id}");
    }
    assert!(prompt.contains("The question must require exactly 3 relevant files."));
    assert_eq!(prompt, build_prompt(&corpus, Role::MachineLearningExpert, 3, &[], "Be concrete.").unwrap().render());
}

#[test]
fn template_client_output_is_valid_and_seeded() {
    let corpus = corpus();
    let plan: Vec<PlanEntry> = (1..=3)
        .map(|n| PlanEntry { role: Role::ALL[n], target_n: n, count: 4 })
        .collect();
    let run = |seed| {
        let client = TemplateClient::new(corpus.clone(), seed);
        generate_dataset(&corpus, &client, &plan, &GenerationConfig { seed, ..Default::default() }).unwrap()
    };
    let a = run(5);
    assert_eq!(a.samples.len(), 12);
    assert!(a.rejections.is_empty());
    assert_eq!(a, run(5));
    let ns: Vec<usize> = a.samples.iter().map(|s| s.n()).collect();
    assert_eq!(ns, [1, 1, 1, 1, 2, 2, 2, 2, 3, 3, 3, 3]);
}

#[test]
fn client_registry() {
    let registry = clients();
    let names: Vec<&str> = registry.names().collect();
    assert_eq!(names, ["openai-chat", "scripted", "template"]);
    let ctx = ClientContext { corpus: Some(corpus()), seed: 1, script: None };
    let make = registry.get("template").unwrap();
    assert_eq!(make(&ctx).unwrap().name(), "template");
    assert!(registry.get("gpt-5").is_err());
    assert!((registry.get("scripted").unwrap())(&ctx).is_err());
}

/// Token-overlap ranking: at zero noise every relevant file shares a token
/// with the question and no other file does.
#[test]
fn zero_noise_fixture_is_separable_by_token_overlap() {
    let (corpus, samples, _) = synth_generate_with_words(&SynthConfig::new(20, 300, 4, 9)).unwrap();
    let bags: Vec<HashSet<String>> = corpus
        .descriptors()
        .iter()
        .map(|d| tokenize(&d.render_text()).into_iter().collect())
        .collect();
    for s in &samples {
        let q: HashSet<String> = tokenize(&s.question).into_iter().collect();
        let overlap: Vec<usize> = bags.iter().map(|b| b.intersection(&q).count()).collect();
        let worst_relevant = corpus
            .descriptors()
            .iter()
            .zip(&overlap)
            .filter(|(d, _)| s.relevant_files.contains(&d.file_id))
            .map(|(_, o)| *o)
            .min()
            .unwrap();
        let best_other = corpus
            .descriptors()
            .iter()
            .zip(&overlap)
            .filter(|(d, _)| !s.relevant_files.contains(&d.file_id))
            .map(|(_, o)| *o)
            .max()
            .unwrap_or(0);
        assert!(worst_relevant > best_other, "{:?}", s.question);
    }
}

#[test]
fn noisy_fixture_hides_some_files_from_token_overlap() {
    let (corpus, samples, _) = synth_generate_with_words(&SynthConfig::new(20, 300, 4, 9).with_noise(0.5)).unwrap();
    let hidden = samples
        .iter()
        .filter(|s| {
            let q: HashSet<String> = tokenize(&s.question).into_iter().collect();
            s.relevant_files.iter().any(|id| {
                let bag: HashSet<String> = tokenize(&corpus.get(id).unwrap().render_text()).into_iter().collect();
                bag.is_disjoint(&q)
            })
        })
        .count();
    assert!(hidden > 0);
}
