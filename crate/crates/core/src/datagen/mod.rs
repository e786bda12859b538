//! Question-dataset generation.
//!
//! An LLM is asked, while role-playing one of several market personas, to
//! write questions that need a requested number of table files. Prompts are
//! pure templates over the corpus dictionary, guidelines and few-shot
//! examples; completions are parsed strictly and validated against the
//! corpus before they become [`QuerySample`](crate::corpus::QuerySample)s.
//!
//! [`synth`] builds a fully offline corpus and dataset for tests and demos.

mod client;
mod generate;
mod prompt;
pub mod synth;

use thiserror::Error;

pub use client::{
    clients, ClientContext, HttpChatClient, LlmClient, LlmError, ScriptedClient, TemplateClient,
    ENDPOINT_ENV, API_KEY_ENV, MODEL_ENV,
};
pub use generate::{
    generate_dataset, parse_completion, GenerationAborted, GenerationConfig, GenerationErrorKind,
    GenerationOutput,
    PlanEntry, Rejection, MAX_RETRIES,
};
pub use prompt::{build_prompt, target_instruction, FewShotExample, Role, RolePlayPrompt};
pub use synth::{synth_generate, synth_generate_with_words, FileWords, SynthConfig};

#[derive(Debug, Error, PartialEq)]
pub enum DatagenError {
    #[error("target_n must be >= 1")]
    ZeroTarget,
    #[error("few-shot example references unknown file '{0}'")]
    UnknownFewShotFile(String),
    #[error("unknown role '{0}'")]
    UnknownRole(String),
    #[error("invalid plan entry {0:?}: expected role:target_n:count")]
    BadPlan(String),
    #[error("degenerate parameters: {0}")]
    Degenerate(String),
}
