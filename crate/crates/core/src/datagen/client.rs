//! LLM access behind [`LlmClient`], with clients registered by name.

use std::collections::VecDeque;
use std::path::PathBuf;
use std::sync::Mutex;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use thiserror::Error;

use crate::corpus::Corpus;
use crate::registry::Registry;

pub const ENDPOINT_ENV: &str = "TEM_LLM_ENDPOINT";
pub const API_KEY_ENV: &str = "TEM_LLM_API_KEY";
pub const MODEL_ENV: &str = "TEM_LLM_MODEL";

#[derive(Debug, Clone, Error, PartialEq)]
pub enum LlmError {
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("client configuration: {0}")]
    Config(String),
}

/// Text completion service. Implementations are injected; generation code
/// never constructs one itself.
pub trait LlmClient: Send + Sync {
    fn name(&self) -> &str;

    fn complete(&self, prompt: &str) -> Result<String, LlmError>;
}

/// Replays a fixed script of responses in order, recording every prompt.
#[derive(Debug, Default)]
pub struct ScriptedClient {
    script: Mutex<VecDeque<Result<String, LlmError>>>,
    prompts: Mutex<Vec<String>>,
}

impl ScriptedClient {
    pub fn new<I>(responses: I) -> Self
    where
        I: IntoIterator<Item = Result<String, LlmError>>,
    {
        Self {
            script: Mutex::new(responses.into_iter().collect()),
            prompts: Mutex::new(Vec::new()),
        }
    }

    /// One completion per non-empty line.
    pub fn from_lines(text: &str) -> Self {
        Self::new(
            text.lines()
                .filter(|l| !l.trim().is_empty())
                .map(|l| Ok(l.to_string())),
        )
    }

    pub fn prompts(&self) -> Vec<String> {
        self.prompts.lock().expect("prompt log").clone()
    }

    pub fn remaining(&self) -> usize {
        self.script.lock().expect("script").len()
    }
}

impl LlmClient for ScriptedClient {
    fn name(&self) -> &str {
        "scripted"
    }

    fn complete(&self, prompt: &str) -> Result<String, LlmError> {
        self.prompts.lock().expect("prompt log").push(prompt.to_string());
        self.script
            .lock()
            .expect("script")
            .pop_front()
            .unwrap_or_else(|| Err(LlmError::Transport("script exhausted".into())))
    }
}

/// Offline stand-in for a real model: reads the requested file count from
/// the prompt, picks that many corpus files at random and phrases a question
/// from their names.
#[derive(Debug)]
pub struct TemplateClient {
    corpus: Corpus,
    rng: Mutex<ChaCha8Rng>,
}

const OPENERS: &[&str] = &[
    "How does",
    "What is the relationship between",
    "Compare the recent behaviour of",
    "Using daily data, analyse",
];

impl TemplateClient {
    pub fn new(corpus: Corpus, seed: u64) -> Self {
        Self {
            corpus,
            rng: Mutex::new(ChaCha8Rng::seed_from_u64(seed)),
        }
    }

    fn requested(prompt: &str) -> Option<usize> {
        prompt.lines().find_map(|l| {
            l.strip_prefix("The question must require exactly ")?
                .split_whitespace()
                .next()?
                .parse()
                .ok()
        })
    }
}

impl LlmClient for TemplateClient {
    fn name(&self) -> &str {
        "template"
    }

    fn complete(&self, prompt: &str) -> Result<String, LlmError> {
        let n = Self::requested(prompt)
            .ok_or_else(|| LlmError::Transport("prompt carries no file-count instruction".into()))?
            .min(self.corpus.len());
        let mut rng = self.rng.lock().expect("rng");
        let mut picked: Vec<&crate::corpus::TableDescriptor> =
            self.corpus.descriptors().choose_multiple(&mut *rng, n).collect();
        picked.shuffle(&mut *rng);
        let names: Vec<&str> = picked.iter().map(|d| d.name.as_str()).collect();
        let opener = OPENERS.choose(&mut *rng).expect("non-empty");
        let question = format!("{opener} {} over the last quarter?", names.join(" and "));
        let files: Vec<&str> = picked.iter().map(|d| d.file_id.as_str()).collect();
        Ok(json!({"question": question, "relevant_files": files}).to_string())
    }
}

/// OpenAI-compatible chat-completions client configured from the
/// environment ([`ENDPOINT_ENV`], [`API_KEY_ENV`], optional [`MODEL_ENV`]).
#[derive(Debug, Clone)]
pub struct HttpChatClient {
    endpoint: String,
    api_key: String,
    model: String,
}

impl HttpChatClient {
    pub fn new(endpoint: String, api_key: String, model: String) -> Self {
        Self {
            endpoint,
            api_key,
            model,
        }
    }

    pub fn from_env() -> Result<Self, LlmError> {
        let var = |k: &str| {
            std::env::var(k).map_err(|_| LlmError::Config(format!("environment variable {k} not set")))
        };
        Ok(Self::new(
            var(ENDPOINT_ENV)?,
            var(API_KEY_ENV)?,
            std::env::var(MODEL_ENV).unwrap_or_else(|_| "gpt-4".to_string()),
        ))
    }

    pub fn request_body(&self, prompt: &str) -> Value {
        json!({
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}],
        })
    }

    /// Extracts `choices[0].message.content`.
    pub fn parse_response(body: &Value) -> Result<String, LlmError> {
        body.pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| LlmError::Transport(format!("unexpected response shape: {body}")))
    }
}

impl LlmClient for HttpChatClient {
    fn name(&self) -> &str {
        "openai-chat"
    }

    fn complete(&self, prompt: &str) -> Result<String, LlmError> {
        let body: Value = ureq::post(&self.endpoint)
            .header("Authorization", &format!("Bearer {}", self.api_key))
            .send_json(self.request_body(prompt))
            .map_err(|e| LlmError::Transport(e.to_string()))?
            .body_mut()
            .read_json()
            .map_err(|e| LlmError::Transport(e.to_string()))?;
        Self::parse_response(&body)
    }
}

/// Inputs available to client factories.
#[derive(Debug, Clone, Default)]
pub struct ClientContext {
    pub corpus: Option<Corpus>,
    pub seed: u64,
    /// Completions file for the `scripted` client.
    pub script: Option<PathBuf>,
}

pub type ClientFactory = fn(&ClientContext) -> Result<Box<dyn LlmClient>, LlmError>;

pub fn clients() -> Registry<ClientFactory> {
    Registry::<ClientFactory>::new("llm client")
        .with("scripted", |ctx| {
            let path = ctx
                .script
                .as_ref()
                .ok_or_else(|| LlmError::Config("scripted client needs a script file".into()))?;
            let text = std::fs::read_to_string(path)
                .map_err(|e| LlmError::Config(format!("{}: {e}", path.display())))?;
            Ok(Box::new(ScriptedClient::from_lines(&text)))
        })
        .with("template", |ctx| {
            let corpus = ctx
                .corpus
                .clone()
                .ok_or_else(|| LlmError::Config("template client needs a corpus".into()))?;
            Ok(Box::new(TemplateClient::new(corpus, ctx.seed)))
        })
        .with("openai-chat", |_| Ok(Box::new(HttpChatClient::from_env()?)))
}
