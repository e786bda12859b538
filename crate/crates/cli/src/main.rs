//! `tem`: train, index, retrieve, evaluate and generate data for tabular
//! file retrieval.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "tem", version, about = "Table-descriptor embedding retrieval")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fine-tune an encoder on question → relevant-file pairs.
    Train(TrainArgs),
    /// Embed every descriptor of a corpus into an index file.
    Index(IndexArgs),
    /// Print the top-k files for one query as `file_id<TAB>score` lines.
    Retrieve(RetrieveArgs),
    /// Score a dataset and write a precision/recall/hit-rate report.
    Eval(EvalArgs),
    /// Generate a question dataset with an LLM client.
    GenData(GenDataArgs),
    /// Write a synthetic corpus and question set.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    dataset: PathBuf,
    /// Output weights file.
    #[arg(long)]
    out: PathBuf,
    /// `key=value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Config override, repeatable: `--set epochs=10`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Start from these weights and add unseen tokens by vocabulary expansion.
    #[arg(long)]
    base_weights: Option<PathBuf>,
    /// Initializer for expanded tokens.
    #[arg(long, default_value = "mean-exact")]
    expansion: String,
    /// Loss history CSV (default: `<out>.loss.csv`).
    #[arg(long)]
    loss_csv: Option<PathBuf>,
    /// Run manifest (default: `<out>.manifest.json`).
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct IndexArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    weights: PathBuf,
    /// Output index file.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct RetrieveArgs {
    #[arg(long)]
    weights: PathBuf,
    #[arg(long)]
    index: PathBuf,
    #[arg(long)]
    query: String,
    #[arg(long, default_value_t = tem_core::evaluator::DEFAULT_K)]
    k: usize,
    /// Also write the ranked list to this file.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Run manifest (default: `<out>.manifest.json` when `--out` is given).
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    weights: PathBuf,
    /// Prebuilt index; built in memory from the corpus when omitted.
    #[arg(long)]
    index: Option<PathBuf>,
    #[arg(long, default_value_t = tem_core::evaluator::DEFAULT_K)]
    k: usize,
    /// Report format: text, csv or json.
    #[arg(long, default_value = "text")]
    format: String,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct GenDataArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// LLM client: template, scripted or openai-chat.
    #[arg(long, default_value = "template")]
    client: String,
    /// Completions file for the scripted client, one per line.
    #[arg(long)]
    script: Option<PathBuf>,
    /// Plan entry `role:target_n:count`, repeatable.
    #[arg(long, required = true)]
    plan: Vec<String>,
    #[arg(long)]
    guidelines: Option<PathBuf>,
    /// JSONL few-shot examples `{"question", "relevant_files"}`.
    #[arg(long)]
    few_shot: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output dataset JSONL.
    #[arg(long)]
    out: PathBuf,
    /// Rejection log JSONL (default: `<out>.rejections.jsonl`).
    #[arg(long)]
    rejections: Option<PathBuf>,
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 20)]
    files: usize,
    #[arg(long, default_value_t = 400)]
    questions: usize,
    #[arg(long, default_value_t = 4)]
    max_n: usize,
    #[arg(long, default_value_t = 0.5)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output corpus JSONL.
    #[arg(long)]
    corpus_out: PathBuf,
    /// Output dataset JSONL (the first `questions - test_count` questions).
    #[arg(long)]
    dataset_out: PathBuf,
    /// Held-out questions JSONL.
    #[arg(long)]
    test_out: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    test_count: usize,
    #[arg(long)]
    manifest: Option<PathBuf>,
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(a) => commands::train(a, &argv),
        Command::Index(a) => commands::index(a, &argv),
        Command::Retrieve(a) => commands::retrieve(a, &argv),
        Command::Eval(a) => commands::eval(a, &argv),
        Command::GenData(a) => commands::gen_data(a, &argv),
        Command::Synth(a) => commands::synth(a, &argv),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(commands::CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            eprintln!("\nFor more information, try 'tem --help'.");
            ExitCode::from(2)
        }
        Err(commands::CliError::Runtime(err)) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}
