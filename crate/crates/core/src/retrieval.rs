//! Descriptor index and exhaustive top-k search.
//!
//! One unit-norm vector per table descriptor; a query is scored against every
//! row by cosine similarity. Results are ordered by score (descending) then
//! file_id (ascending), so ties never depend on corpus order.
//!
//! Index file layout (little-endian):
//!
//! ```text
//! "TEMI" | u32 version=1 | fingerprint (u32 len + UTF-8) | u32 count | u32 d_out
//! | count × (u32 len + UTF-8 file_id) | count·d_out f64 rows | u32 CRC32
//! ```

use std::cmp::Ordering;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::binfmt::{FormatError, Reader, Writer};
use crate::corpus::Corpus;
use crate::encoder::EncoderModel;
use crate::tensor::{dot, Matrix};

pub const INDEX_MAGIC: &[u8; 4] = b"TEMI";
pub const INDEX_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error("stale index: built with model {index}, queried with model {model}")]
    FingerprintMismatch { index: String, model: String },
    #[error("k must be >= 1")]
    ZeroK,
    #[error("invalid index: {0}")]
    Invalid(String),
    #[error(transparent)]
    Format(#[from] FormatError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorIndex {
    file_ids: Vec<String>,
    vectors: Matrix,
    fingerprint: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hit {
    pub file_id: String,
    pub score: f64,
}

/// Ranked files for one query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Retrieval {
    pub query: String,
    pub hits: Vec<Hit>,
}

impl Retrieval {
    pub fn file_ids(&self) -> Vec<String> {
        self.hits.iter().map(|h| h.file_id.clone()).collect()
    }
}

/// Ranking order: score descending, then file_id ascending.
pub fn rank_order(a: (&str, f64), b: (&str, f64)) -> Ordering {
    b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0))
}

/// Embeds every descriptor's rendered text, in corpus order.
pub fn build_index(model: &EncoderModel, corpus: &Corpus) -> DescriptorIndex {
    let d = model.d_out();
    let mut vectors = Matrix::zeros(corpus.len(), d);
    for (i, desc) in corpus.descriptors().iter().enumerate() {
        vectors
            .row_mut(i)
            .copy_from_slice(model.encode(&desc.render_text()).as_slice());
    }
    DescriptorIndex {
        file_ids: corpus.file_ids().map(str::to_string).collect(),
        vectors,
        fingerprint: model.fingerprint(),
    }
}

impl DescriptorIndex {
    pub fn from_parts(file_ids: Vec<String>, vectors: Matrix, fingerprint: String) -> Result<Self, RetrievalError> {
        if file_ids.len() != vectors.rows() {
            return Err(RetrievalError::Invalid(format!(
                "{} file ids for {} rows",
                file_ids.len(),
                vectors.rows()
            )));
        }
        if fingerprint.is_empty() {
            return Err(RetrievalError::Invalid("empty fingerprint".into()));
        }
        for (id, row) in file_ids.iter().zip(vectors.iter_rows()) {
            let norm = dot(row, row).sqrt();
            if (norm - 1.0).abs() > 1e-9 {
                return Err(RetrievalError::Invalid(format!("row '{id}' has norm {norm}")));
            }
        }
        let mut sorted: Vec<&String> = file_ids.iter().collect();
        sorted.sort();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(RetrievalError::Invalid("duplicate file id".into()));
        }
        Ok(Self {
            file_ids,
            vectors,
            fingerprint,
        })
    }

    pub fn len(&self) -> usize {
        self.file_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.file_ids.is_empty()
    }

    pub fn file_ids(&self) -> &[String] {
        &self.file_ids
    }

    pub fn vectors(&self) -> &Matrix {
        &self.vectors
    }

    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    /// Cosine score of every row against a unit query vector, in index order.
    pub fn scores(&self, query: &[f64]) -> Vec<f64> {
        self.vectors
            .iter_rows()
            .map(|row| dot(row, query).clamp(-1.0, 1.0))
            .collect()
    }

    /// Top-`k` files for `query`. Fails if `model` is not the model the index
    /// was built with.
    pub fn search_topk(&self, model: &EncoderModel, query: &str, k: usize) -> Result<Retrieval, RetrievalError> {
        let fingerprint = model.fingerprint();
        if fingerprint != self.fingerprint {
            return Err(RetrievalError::FingerprintMismatch {
                index: self.fingerprint.clone(),
                model: fingerprint,
            });
        }
        self.search_vector(query, model.encode(query).as_slice(), k)
    }

    /// Top-`k` for an already-encoded query (no fingerprint check).
    pub fn search_vector(&self, query: &str, vector: &[f64], k: usize) -> Result<Retrieval, RetrievalError> {
        if k == 0 {
            return Err(RetrievalError::ZeroK);
        }
        let scores = self.scores(vector);
        let mut ranked: Vec<(usize, f64)> = scores.into_iter().enumerate().collect();
        let cmp = |a: &(usize, f64), b: &(usize, f64)| {
            rank_order((&self.file_ids[a.0], a.1), (&self.file_ids[b.0], b.1))
        };
        let k = k.min(ranked.len());
        if k < ranked.len() {
            ranked.select_nth_unstable_by(k - 1, cmp);
            ranked.truncate(k);
        }
        ranked.sort_unstable_by(cmp);
        Ok(Retrieval {
            query: query.to_string(),
            hits: ranked
                .into_iter()
                .map(|(i, score)| Hit {
                    file_id: self.file_ids[i].clone(),
                    score,
                })
                .collect(),
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new(INDEX_MAGIC, INDEX_VERSION);
        w.str(&self.fingerprint);
        w.u32(self.file_ids.len() as u32);
        w.u32(self.vectors.cols() as u32);
        for id in &self.file_ids {
            w.str(id);
        }
        w.f64s(self.vectors.as_slice());
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, RetrievalError> {
        let mut r = Reader::open(bytes, INDEX_MAGIC, INDEX_VERSION)?;
        let fingerprint = r.str()?;
        let count = r.u32()? as usize;
        let dim = r.u32()? as usize;
        let mut file_ids = Vec::with_capacity(count.min(1 << 20));
        for _ in 0..count {
            file_ids.push(r.str()?);
        }
        let data = r.f64s(count * dim)?;
        r.finish()?;
        let vectors = Matrix::from_vec(count, dim, data).expect("sized");
        Self::from_parts(file_ids, vectors, fingerprint)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), RetrievalError> {
        fs::write(path, self.to_bytes()).map_err(FormatError::from)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, RetrievalError> {
        Self::from_bytes(&fs::read(path).map_err(FormatError::from)?)
    }
}
