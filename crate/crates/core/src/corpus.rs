//! Table-descriptor corpus and question → relevant-files dataset.
//!
//! Both are stored as JSONL, one record per line:
//!
//! ```text
//! corpus.jsonl:  {"file_id": "...", "name": "...", "description": "...",
//!                 "columns": [{"name": "...", "definition": "..."}, ...]}
//! dataset.jsonl: {"question": "...", "relevant_files": ["...", ...]}
//! ```
//!
//! Unknown keys are rejected. Table contents are never read; a table is only
//! ever represented by its descriptor.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("line {line}: malformed record: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: duplicate file_id '{file_id}' (first seen on line {first_line})")]
    DuplicateId {
        file_id: String,
        line: usize,
        first_line: usize,
    },
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("line {line}: unknown file_id '{file_id}'")]
    UnknownFile { line: usize, file_id: String },
    #[error("line {line}: relevant_files is empty")]
    EmptyRelevant { line: usize },
    #[error("invalid descriptor '{file_id}': {message}")]
    InvalidDescriptor { file_id: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Column {
    pub name: String,
    pub definition: String,
}

impl Column {
    pub fn new(name: impl Into<String>, definition: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            definition: definition.into(),
        }
    }
}

/// Metadata standing in for one table / CSV file.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableDescriptor {
    pub file_id: String,
    pub name: String,
    pub description: String,
    pub columns: Vec<Column>,
}

impl TableDescriptor {
    pub fn validate(&self) -> Result<(), CorpusError> {
        let invalid = |message: &str| CorpusError::InvalidDescriptor {
            file_id: self.file_id.clone(),
            message: message.to_string(),
        };
        if self.file_id.is_empty() {
            return Err(invalid("file_id is empty"));
        }
        if self.columns.is_empty() {
            return Err(invalid("no columns"));
        }
        let mut seen = HashSet::new();
        for c in &self.columns {
            if !seen.insert(c.name.as_str()) {
                return Err(invalid(&format!("duplicate column '{}'", c.name)));
            }
        }
        Ok(())
    }

    /// Canonical text fed to the encoder: name, description, then one
    /// `column: definition` line per column, joined by `\n`.
    ///
    /// Backslashes and newlines inside fields are escaped (and `:` inside
    /// column names), so distinct descriptors always render differently.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        push_escaped(&mut out, &self.name, false);
        out.push('\n');
        push_escaped(&mut out, &self.description, false);
        for c in &self.columns {
            out.push('\n');
            push_escaped(&mut out, &c.name, true);
            out.push_str(": ");
            push_escaped(&mut out, &c.definition, false);
        }
        out
    }
}

fn push_escaped(out: &mut String, s: &str, escape_colon: bool) {
    for ch in s.chars() {
        match ch {
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            ':' if escape_colon => out.push_str("\\:"),
            _ => out.push(ch),
        }
    }
}

/// Free-function form of [`TableDescriptor::render_text`].
pub fn render_descriptor_text(d: &TableDescriptor) -> String {
    d.render_text()
}

/// A question mapped to the set of files needed to answer it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuerySample {
    pub question: String,
    pub relevant_files: BTreeSet<String>,
}

impl QuerySample {
    pub fn new<I, S>(question: impl Into<String>, files: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            question: question.into(),
            relevant_files: files.into_iter().map(Into::into).collect(),
        }
    }

    /// Number of relevant files, the per-question N.
    pub fn n(&self) -> usize {
        self.relevant_files.len()
    }
}

/// Validated, immutable list of descriptors with an id lookup.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    descriptors: Vec<TableDescriptor>,
    id_index: HashMap<String, usize>,
}

impl Corpus {
    pub fn new(descriptors: Vec<TableDescriptor>) -> Result<Self, CorpusError> {
        if descriptors.is_empty() {
            return Err(CorpusError::EmptyCorpus);
        }
        let mut id_index = HashMap::with_capacity(descriptors.len());
        for (i, d) in descriptors.iter().enumerate() {
            d.validate()?;
            if let Some(&first) = id_index.get(&d.file_id) {
                return Err(CorpusError::DuplicateId {
                    file_id: d.file_id.clone(),
                    line: i + 1,
                    first_line: first + 1,
                });
            }
            id_index.insert(d.file_id.clone(), i);
        }
        Ok(Self {
            descriptors,
            id_index,
        })
    }

    pub fn len(&self) -> usize {
        self.descriptors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.descriptors.is_empty()
    }

    pub fn descriptors(&self) -> &[TableDescriptor] {
        &self.descriptors
    }

    pub fn get(&self, file_id: &str) -> Option<&TableDescriptor> {
        self.id_index.get(file_id).map(|&i| &self.descriptors[i])
    }

    pub fn position(&self, file_id: &str) -> Option<usize> {
        self.id_index.get(file_id).copied()
    }

    pub fn contains(&self, file_id: &str) -> bool {
        self.id_index.contains_key(file_id)
    }

    pub fn file_ids(&self) -> impl Iterator<Item = &str> {
        self.descriptors.iter().map(|d| d.file_id.as_str())
    }

    /// Checks every relevant file of `sample` against this corpus.
    pub fn check_sample(&self, sample: &QuerySample, line: usize) -> Result<(), CorpusError> {
        if sample.relevant_files.is_empty() {
            return Err(CorpusError::EmptyRelevant { line });
        }
        for id in &sample.relevant_files {
            if !self.contains(id) {
                return Err(CorpusError::UnknownFile {
                    line,
                    file_id: id.clone(),
                });
            }
        }
        Ok(())
    }

    /// Positive context for a sample: rendered descriptors of its relevant
    /// files in file_id order, separated by a blank line.
    pub fn context_text(&self, sample: &QuerySample) -> Option<String> {
        let parts = sample
            .relevant_files
            .iter()
            .map(|id| self.get(id).map(TableDescriptor::render_text))
            .collect::<Option<Vec<_>>>()?;
        Some(parts.join("\n\n"))
    }

    pub fn to_jsonl(&self) -> String {
        to_jsonl(&self.descriptors)
    }
}

// Dataset records carry relevant_files as a list so that duplicates can be
// reported instead of silently collapsed.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSample {
    question: String,
    relevant_files: Vec<String>,
}

fn read(path: &Path) -> Result<String, CorpusError> {
    fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Non-blank lines with their 1-based line numbers.
fn records(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty())
}

fn malformed(line: usize, e: impl std::fmt::Display) -> CorpusError {
    CorpusError::Malformed {
        line,
        message: e.to_string(),
    }
}

pub fn parse_corpus(text: &str) -> Result<Corpus, CorpusError> {
    let mut descriptors = Vec::new();
    let mut first_line: HashMap<String, usize> = HashMap::new();
    for (line, rec) in records(text) {
        let d: TableDescriptor = serde_json::from_str(rec).map_err(|e| malformed(line, e))?;
        d.validate().map_err(|e| malformed(line, e))?;
        if let Some(&first) = first_line.get(&d.file_id) {
            return Err(CorpusError::DuplicateId {
                file_id: d.file_id,
                line,
                first_line: first,
            });
        }
        first_line.insert(d.file_id.clone(), line);
        descriptors.push(d);
    }
    Corpus::new(descriptors)
}

pub fn load_corpus(path: impl AsRef<Path>) -> Result<Corpus, CorpusError> {
    parse_corpus(&read(path.as_ref())?)
}

pub fn parse_dataset(text: &str, corpus: &Corpus) -> Result<Vec<QuerySample>, CorpusError> {
    let mut samples = Vec::new();
    for (line, rec) in records(text) {
        let raw: RawSample = serde_json::from_str(rec).map_err(|e| malformed(line, e))?;
        let mut files = BTreeSet::new();
        for id in raw.relevant_files {
            if !files.insert(id.clone()) {
                return Err(malformed(line, format!("duplicate relevant file '{id}'")));
            }
        }
        let sample = QuerySample {
            question: raw.question,
            relevant_files: files,
        };
        corpus.check_sample(&sample, line)?;
        samples.push(sample);
    }
    Ok(samples)
}

pub fn load_dataset(path: impl AsRef<Path>, corpus: &Corpus) -> Result<Vec<QuerySample>, CorpusError> {
    parse_dataset(&read(path.as_ref())?, corpus)
}

/// One compact JSON object per line, each line `\n`-terminated.
pub fn to_jsonl<T: Serialize>(records: &[T]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("records serialize"));
        out.push('\n');
    }
    out
}

pub fn write_jsonl<T: Serialize>(path: impl AsRef<Path>, records: &[T]) -> std::io::Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(to_jsonl(records).as_bytes())?;
    f.sync_all()
}
