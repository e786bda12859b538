use std::collections::HashMap;
use std::fs;
use std::path::Path;

use thiserror::Error;

use super::tokenize;

/// Reserved token at id 0; out-of-vocabulary tokens map here.
///
/// The tokenizer never produces brackets, so no text can collide with it.
pub const UNK_TOKEN: &str = "[UNK]";

#[derive(Debug, Error)]
pub enum VocabError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Invalid { line: usize, message: String },
}

/// Dense token ↔ id map with [`UNK_TOKEN`] at id 0.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocabulary {
    /// Builds a vocabulary from `tokens`, prepending [`UNK_TOKEN`] if absent.
    /// Returns `None` on duplicates or if `UNK_TOKEN` appears at a nonzero id.
    pub fn from_tokens<I: IntoIterator<Item = String>>(tokens: I) -> Option<Self> {
        let mut v = Self {
            tokens: vec![UNK_TOKEN.to_string()],
            index: HashMap::from([(UNK_TOKEN.to_string(), 0)]),
        };
        for (i, t) in tokens.into_iter().enumerate() {
            if i == 0 && t == UNK_TOKEN {
                continue;
            }
            if !v.push(t) {
                return None;
            }
        }
        Some(v)
    }

    /// Appends a token. Returns false if it is already present.
    pub(crate) fn push(&mut self, token: String) -> bool {
        if self.index.contains_key(&token) {
            return false;
        }
        self.index.insert(token.clone(), self.tokens.len() as u32);
        self.tokens.push(token);
        true
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    /// Token ids for `text`; unknown tokens map to id 0.
    pub fn encode(&self, text: &str) -> Vec<u32> {
        tokenize(text)
            .iter()
            .map(|t| self.id(t).unwrap_or(0))
            .collect()
    }

    /// One token per line; the id is the zero-based line number.
    pub fn to_text(&self) -> String {
        let mut out = self.tokens.join("\n");
        out.push('\n');
        out
    }

    pub fn from_text(text: &str) -> Result<Self, VocabError> {
        let mut lines = text.lines();
        match lines.next() {
            Some(UNK_TOKEN) => {}
            other => {
                return Err(VocabError::Invalid {
                    line: 1,
                    message: format!("expected {UNK_TOKEN}, found {other:?}"),
                })
            }
        }
        let mut v = Self::from_tokens(std::iter::empty()).expect("empty vocabulary");
        for (i, line) in lines.enumerate() {
            if line.is_empty() || !v.push(line.to_string()) {
                return Err(VocabError::Invalid {
                    line: i + 2,
                    message: format!("empty or duplicate token {line:?}"),
                });
            }
        }
        Ok(v)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), VocabError> {
        Ok(fs::write(path, self.to_text())?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, VocabError> {
        Self::from_text(&fs::read_to_string(path)?)
    }
}

/// Tokens occurring at least `min_count` times across `texts`, ordered by
/// frequency (descending) then token (ascending), after [`UNK_TOKEN`].
pub fn build_vocab<S: AsRef<str>>(texts: &[S], min_count: usize) -> Vocabulary {
    let mut counts: HashMap<String, usize> = HashMap::new();
    for text in texts {
        for tok in tokenize(text.as_ref()) {
            *counts.entry(tok).or_default() += 1;
        }
    }
    let mut kept: Vec<(String, usize)> = counts
        .into_iter()
        .filter(|&(_, c)| c >= min_count.max(1))
        .collect();
    kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    Vocabulary::from_tokens(kept.into_iter().map(|(t, _)| t)).expect("counted tokens are unique")
}
