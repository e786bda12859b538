//! Subcommand implementations.

use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, Context};
use tem_core::config::KeyValues;
use tem_core::corpus::{load_corpus, load_dataset, to_jsonl, Corpus};
use tem_core::datagen::{self, ClientContext, FewShotExample, GenerationConfig, PlanEntry, SynthConfig};
use tem_core::evaluator::{self, emitters};
use tem_core::retrieval::{build_index, DescriptorIndex, RetrievalError};
use tem_core::textenc::{build_vocab, expand_vocab, initializers, UNK_TOKEN};
use tem_core::trainer::{self, history_csv, TrainConfig};
use tem_core::EncoderModel;

use crate::manifest::{sibling, write_atomic, RunManifest};
use crate::{EvalArgs, GenDataArgs, IndexArgs, RetrieveArgs, SynthArgs, TrainArgs};

const DEFAULT_GUIDELINES: &str = include_str!("../assets/guidelines.txt");

/// Encoder shape keys accepted next to [`TrainConfig::KEYS`].
const MODEL_KEYS: &[(&str, &str)] = &[("d_tok", "64"), ("d_out", "64"), ("min_count", "1")];

#[derive(Debug)]
pub enum CliError {
    /// Bad invocation: exit status 2.
    Usage(String),
    /// Failure while running: exit status 1.
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::Runtime(e)
    }
}

type CliResult<T = ()> = Result<T, CliError>;

fn usage(msg: impl Display) -> CliError {
    CliError::Usage(msg.to_string())
}

fn runtime(e: impl Into<anyhow::Error>) -> CliError {
    CliError::Runtime(e.into())
}

fn require(flag: &str, path: &Path) -> CliResult {
    if path.is_file() {
        Ok(())
    } else {
        Err(usage(format!("{flag} {}: no such file", path.display())))
    }
}

fn require_opt(flag: &str, path: Option<&PathBuf>) -> CliResult {
    path.map_or(Ok(()), |p| require(flag, p))
}

fn corpus_at(path: &Path) -> CliResult<Corpus> {
    load_corpus(path)
        .with_context(|| format!("loading corpus {}", path.display()))
        .map_err(runtime)
}

fn model_at(path: &Path) -> CliResult<EncoderModel> {
    EncoderModel::load_weights(path)
        .with_context(|| format!("loading weights {}", path.display()))
        .map_err(runtime)
}

fn manifest_path(explicit: Option<PathBuf>, out: &Path) -> PathBuf {
    explicit.unwrap_or_else(|| sibling(out, "manifest.json"))
}

/// Config file, then `--set` overrides, then `--seed`.
fn resolve_train_config(args: &TrainArgs) -> CliResult<(TrainConfig, KeyValues)> {
    let mut kv = KeyValues::default();
    for (k, v) in MODEL_KEYS {
        kv.set(*k, *v);
    }
    if let Some(path) = &args.config {
        kv.merge(&KeyValues::load(path).map_err(usage)?);
    }
    let mut overrides = KeyValues::default();
    for assignment in &args.overrides {
        let (k, v) = KeyValues::parse_assignment(assignment).map_err(usage)?;
        overrides.set(k, v);
    }
    kv.merge(&overrides);
    if let Some(seed) = args.seed {
        kv.set("seed", seed.to_string());
    }
    for (k, _) in kv.iter() {
        let known = TrainConfig::KEYS.contains(&k) || MODEL_KEYS.iter().any(|(m, _)| *m == k);
        if !known {
            return Err(usage(format!("unknown config key '{k}'")));
        }
    }
    let mut config = TrainConfig::default();
    config.apply(&kv).map_err(usage)?;
    config.validate().map_err(usage)?;
    let mut resolved = config.to_key_values();
    for (k, _) in MODEL_KEYS {
        let v = kv.get(k).expect("defaults set above").to_string();
        resolved.set(*k, v);
    }
    Ok((config, resolved))
}

fn parse_key<T: std::str::FromStr>(kv: &KeyValues, key: &str) -> CliResult<T>
where
    T::Err: Display,
{
    kv.parse_value(key)
        .map_err(usage)?
        .ok_or_else(|| usage(format!("missing config key '{key}'")))
}

pub fn train(args: TrainArgs, argv: &[String]) -> CliResult {
    let start = Instant::now();
    require("--corpus", &args.corpus)?;
    require("--dataset", &args.dataset)?;
    require_opt("--config", args.config.as_ref())?;
    require_opt("--base-weights", args.base_weights.as_ref())?;
    let (config, mut resolved) = resolve_train_config(&args)?;
    let d_tok: usize = parse_key(&resolved, "d_tok")?;
    let d_out: usize = parse_key(&resolved, "d_out")?;
    let min_count: usize = parse_key(&resolved, "min_count")?;
    let initializers = initializers();
    let initializer = initializers.get(&args.expansion).map_err(usage)?;

    let corpus = corpus_at(&args.corpus)?;
    let samples = load_dataset(&args.dataset, &corpus)
        .with_context(|| format!("loading dataset {}", args.dataset.display()))?;
    let mut texts: Vec<String> = corpus.descriptors().iter().map(|d| d.render_text()).collect();
    texts.extend(samples.iter().map(|s| s.question.clone()));
    let vocab = build_vocab(&texts, min_count);

    let model = match &args.base_weights {
        None => EncoderModel::init(vocab, d_tok, d_out, config.seed).map_err(runtime)?,
        Some(path) => {
            let base = model_at(path)?;
            let new_tokens: Vec<String> = vocab
                .tokens()
                .iter()
                .filter(|t| t.as_str() != UNK_TOKEN && !base.vocab().contains(t))
                .cloned()
                .collect();
            let init = initializer();
            let (v, emb, _) =
                expand_vocab(base.vocab(), base.token_emb(), &new_tokens, init.as_ref(), config.seed)
                    .map_err(runtime)?;
            resolved.set("d_tok", base.d_tok().to_string());
            resolved.set("d_out", base.d_out().to_string());
            resolved.set("expanded_tokens", new_tokens.len().to_string());
            EncoderModel::from_parts(v, emb, base.projection().clone()).map_err(runtime)?
        }
    };
    let (model, history) = trainer::train(model, &samples, &corpus, &config).map_err(runtime)?;

    let loss_csv = args.loss_csv.clone().unwrap_or_else(|| sibling(&args.out, "loss.csv"));
    write_atomic(&args.out, &model.to_bytes())?;
    write_atomic(&loss_csv, history_csv(&history).as_bytes())?;
    eprintln!(
        "trained {} steps on {} samples; final loss {:.6}",
        history.len(),
        samples.len(),
        history.last().map_or(f64::NAN, |r| r.loss)
    );

    let mut m = RunManifest::new("train", argv.to_vec());
    m.config = resolved.into_map();
    m.config.insert("expansion".into(), args.expansion.clone());
    m.seed = Some(config.seed);
    m.input(&args.corpus)?;
    m.input(&args.dataset)?;
    if let Some(p) = &args.config {
        m.input(p)?;
    }
    if let Some(p) = &args.base_weights {
        m.input(p)?;
    }
    m.artifact("weights", &args.out)?;
    m.artifact("loss_csv", &loss_csv)?;
    m.finish(start.elapsed(), &manifest_path(args.manifest, &args.out))?;
    Ok(())
}

pub fn index(args: IndexArgs, argv: &[String]) -> CliResult {
    let start = Instant::now();
    require("--corpus", &args.corpus)?;
    require("--weights", &args.weights)?;
    let corpus = corpus_at(&args.corpus)?;
    let model = model_at(&args.weights)?;
    if args.out.exists() {
        match DescriptorIndex::load(&args.out) {
            Ok(old) if old.fingerprint() != model.fingerprint() => eprintln!(
                "warning: existing index {} was built with model {}, weights are {}; rebuilding",
                args.out.display(),
                old.fingerprint(),
                model.fingerprint()
            ),
            Ok(_) => {}
            Err(e) => eprintln!(
                "warning: existing index {} is unreadable ({e}); rebuilding",
                args.out.display()
            ),
        }
    }
    let index = build_index(&model, &corpus);
    write_atomic(&args.out, &index.to_bytes())?;
    eprintln!("indexed {} descriptors", index.len());

    let mut m = RunManifest::new("index", argv.to_vec());
    m.config.insert("fingerprint".into(), model.fingerprint());
    m.input(&args.corpus)?;
    m.input(&args.weights)?;
    m.artifact("index", &args.out)?;
    m.finish(start.elapsed(), &manifest_path(args.manifest, &args.out))?;
    Ok(())
}

pub fn retrieve(args: RetrieveArgs, argv: &[String]) -> CliResult {
    let start = Instant::now();
    require("--weights", &args.weights)?;
    require("--index", &args.index)?;
    if args.k == 0 {
        return Err(usage("--k must be >= 1"));
    }
    let model = model_at(&args.weights)?;
    let index = DescriptorIndex::load(&args.index)
        .with_context(|| format!("loading index {}", args.index.display()))?;
    let ranked = index.search_topk(&model, &args.query, args.k).map_err(|e| match e {
        RetrievalError::FingerprintMismatch { .. } => {
            anyhow!("{e}; rebuild the index with `tem index`")
        }
        other => other.into(),
    })?;
    let mut lines = String::new();
    for hit in &ranked.hits {
        lines.push_str(&format!("{}\t{}\n", hit.file_id, hit.score));
    }
    print!("{lines}");

    let mut m = RunManifest::new("retrieve", argv.to_vec());
    m.config.insert("k".into(), args.k.to_string());
    m.config.insert("query".into(), args.query.clone());
    m.input(&args.weights)?;
    m.input(&args.index)?;
    let manifest = match (&args.out, args.manifest) {
        (_, Some(p)) => p,
        (Some(out), None) => sibling(out, "manifest.json"),
        (None, None) => sibling(&args.index, "retrieve.manifest.json"),
    };
    if let Some(out) = &args.out {
        write_atomic(out, lines.as_bytes())?;
        m.artifact("ranking", out)?;
    }
    m.finish(start.elapsed(), &manifest)?;
    Ok(())
}

pub fn eval(args: EvalArgs, argv: &[String]) -> CliResult {
    let start = Instant::now();
    require("--corpus", &args.corpus)?;
    require("--dataset", &args.dataset)?;
    require("--weights", &args.weights)?;
    require_opt("--index", args.index.as_ref())?;
    if args.k == 0 {
        return Err(usage("--k must be >= 1"));
    }
    let emitters = emitters();
    let emitter = (emitters.get(&args.format).map_err(usage)?)();

    let corpus = corpus_at(&args.corpus)?;
    let samples = load_dataset(&args.dataset, &corpus)
        .with_context(|| format!("loading dataset {}", args.dataset.display()))?;
    let model = model_at(&args.weights)?;
    let index = match &args.index {
        Some(p) => DescriptorIndex::load(p).with_context(|| format!("loading index {}", p.display()))?,
        None => build_index(&model, &corpus),
    };
    let report = evaluator::evaluate(&index, &model, &samples, args.k).map_err(runtime)?;
    report
        .check_invariants()
        .map_err(|e| anyhow!("report violates invariants: {e}"))?;
    write_atomic(&args.out, emitter.render(&report).as_bytes())?;
    eprintln!(
        "precision@{k} {:.4}  recall@{k} {:.4}  hit@{k} {:.4}  ({} questions)",
        report.precision,
        report.recall,
        report.hit_rate,
        report.sample_count,
        k = args.k
    );

    let mut m = RunManifest::new("eval", argv.to_vec());
    m.config.insert("k".into(), args.k.to_string());
    m.config.insert("format".into(), args.format.clone());
    m.config.insert("fingerprint".into(), model.fingerprint());
    m.input(&args.corpus)?;
    m.input(&args.dataset)?;
    m.input(&args.weights)?;
    if let Some(p) = &args.index {
        m.input(p)?;
    }
    m.artifact("report", &args.out)?;
    m.finish(start.elapsed(), &manifest_path(args.manifest, &args.out))?;
    Ok(())
}

fn load_few_shot(path: &Path) -> CliResult<Vec<FewShotExample>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l)
                .with_context(|| format!("{} line {}", path.display(), i + 1))
                .map_err(runtime)
        })
        .collect()
}

pub fn gen_data(args: GenDataArgs, argv: &[String]) -> CliResult {
    let start = Instant::now();
    require("--corpus", &args.corpus)?;
    require_opt("--script", args.script.as_ref())?;
    require_opt("--guidelines", args.guidelines.as_ref())?;
    require_opt("--few-shot", args.few_shot.as_ref())?;
    let plan: Vec<PlanEntry> = args
        .plan
        .iter()
        .map(|p| p.parse().map_err(usage))
        .collect::<CliResult<_>>()?;
    let clients = datagen::clients();
    let factory = clients.get(&args.client).map_err(usage)?;

    let corpus = corpus_at(&args.corpus)?;
    let guidelines = match &args.guidelines {
        Some(p) => fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?,
        None => DEFAULT_GUIDELINES.to_string(),
    };
    let few_shot = match &args.few_shot {
        Some(p) => load_few_shot(p)?,
        None => Vec::new(),
    };
    let ctx = ClientContext {
        corpus: Some(corpus.clone()),
        seed: args.seed,
        script: args.script.clone(),
    };
    let client = factory(&ctx).map_err(runtime)?;
    let config = GenerationConfig {
        guidelines,
        few_shot,
        seed: args.seed,
        ..GenerationConfig::default()
    };
    let rejections_path = args
        .rejections
        .clone()
        .unwrap_or_else(|| sibling(&args.out, "rejections.jsonl"));

    let (output, failure) = match datagen::generate_dataset(&corpus, client.as_ref(), &plan, &config) {
        Ok(out) => (out, None),
        Err(aborted) => {
            let message = aborted.to_string();
            (aborted.partial, Some(message))
        }
    };
    write_atomic(&args.out, to_jsonl(&output.samples).as_bytes())?;
    write_atomic(&rejections_path, to_jsonl(&output.rejections).as_bytes())?;
    eprintln!(
        "generated {} samples, {} rejected attempts",
        output.samples.len(),
        output.rejections.len()
    );

    let mut m = RunManifest::new("gen-data", argv.to_vec());
    m.config.insert("client".into(), args.client.clone());
    m.config.insert("plan".into(), args.plan.join(" "));
    m.config.insert(
        "few_shot_per_prompt".into(),
        config.few_shot_per_prompt.to_string(),
    );
    m.seed = Some(args.seed);
    m.input(&args.corpus)?;
    for p in [&args.script, &args.guidelines, &args.few_shot].into_iter().flatten() {
        m.input(p)?;
    }
    m.artifact("dataset", &args.out)?;
    m.artifact("rejections", &rejections_path)?;
    if let Some(message) = &failure {
        m.config.insert("aborted".into(), message.clone());
    }
    m.finish(start.elapsed(), &manifest_path(args.manifest, &args.out))?;
    match failure {
        Some(message) => Err(runtime(anyhow!("{message}; partial output saved to {}", args.out.display()))),
        None => Ok(()),
    }
}

pub fn synth(args: SynthArgs, argv: &[String]) -> CliResult {
    let start = Instant::now();
    if args.test_count > 0 && args.test_out.is_none() {
        return Err(usage("--test-count needs --test-out"));
    }
    if args.test_count > 0 && args.test_count >= args.questions {
        return Err(usage("--test-count must be smaller than --questions"));
    }
    let config = SynthConfig::new(args.files, args.questions, args.max_n, args.seed).with_noise(args.noise);
    let (corpus, samples) = datagen::synth_generate(&config).map_err(usage)?;
    let (train, test) = samples.split_at(args.questions - args.test_count);
    write_atomic(&args.corpus_out, corpus.to_jsonl().as_bytes())?;
    write_atomic(&args.dataset_out, to_jsonl(train).as_bytes())?;

    let mut m = RunManifest::new("synth", argv.to_vec());
    m.config.insert("files".into(), args.files.to_string());
    m.config.insert("questions".into(), args.questions.to_string());
    m.config.insert("max_n".into(), args.max_n.to_string());
    m.config.insert("noise".into(), args.noise.to_string());
    m.config.insert("test_count".into(), args.test_count.to_string());
    m.seed = Some(args.seed);
    m.artifact("corpus", &args.corpus_out)?;
    m.artifact("dataset", &args.dataset_out)?;
    if let Some(p) = &args.test_out {
        write_atomic(p, to_jsonl(test).as_bytes())?;
        m.artifact("test", p)?;
    }
    m.finish(start.elapsed(), &manifest_path(args.manifest, &args.dataset_out))?;
    Ok(())
}
