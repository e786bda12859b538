//! Trainable text encoder: token-embedding lookup → mean pooling → linear
//! projection → L2 normalization.
//!
//! Weight file layout (little-endian):
//!
//! ```text
//! "TEMW" | u32 version=1 | u32 n | u32 d_tok | u32 d_out
//! | n × (u32 len, UTF-8 token) | n·d_tok f64 token rows
//! | d_tok·d_out f64 projection rows | u32 CRC32 of all preceding bytes
//! ```

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::binfmt::{FormatError, Reader, Writer};
use crate::tensor::{dot, Matrix};
use crate::textenc::{Vocabulary, UNK_TOKEN};

pub const WEIGHTS_MAGIC: &[u8; 4] = b"TEMW";
pub const WEIGHTS_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum EncoderError {
    #[error("degenerate dimensions: d_tok = {d_tok}, d_out = {d_out} (both must be >= 2)")]
    Dimensions { d_tok: usize, d_out: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite weight")]
    NonFinite,
    #[error(transparent)]
    Format(#[from] FormatError),
}

/// Unit-norm output of [`EncoderModel::encode`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector(Vec<f64>);

impl EmbeddingVector {
    /// Normalizes `values`; returns `None` for a zero or non-finite vector.
    pub fn normalized(mut values: Vec<f64>) -> Option<Self> {
        let norm = dot(&values, &values).sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return None;
        }
        values.iter_mut().for_each(|v| *v /= norm);
        Some(Self(values))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

/// Dot product of unit vectors, clamped to `[-1, 1]`.
pub fn cosine_sim(a: &EmbeddingVector, b: &EmbeddingVector) -> f64 {
    dot(&a.0, &b.0).clamp(-1.0, 1.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderModel {
    vocab: Vocabulary,
    token_emb: Matrix,
    projection: Matrix,
}

/// Intermediate values of one forward pass, kept for backpropagation.
#[derive(Debug, Clone)]
pub struct Forward {
    /// Token ids in ascending order (pooling is order-free).
    pub ids: Vec<u32>,
    pub pooled: Vec<f64>,
    pub projected: Vec<f64>,
    pub norm: f64,
    pub output: EmbeddingVector,
}

impl Forward {
    /// True when the projected vector was zero and the output is the `e₁`
    /// fallback, which carries no gradient.
    pub fn is_fallback(&self) -> bool {
        self.norm == 0.0
    }
}

/// Gradient buffers shaped like the model's trainable tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub token_emb: Matrix,
    pub projection: Matrix,
}

impl Gradients {
    pub fn zeros_like(model: &EncoderModel) -> Self {
        Self {
            token_emb: Matrix::zeros(model.token_emb.rows(), model.token_emb.cols()),
            projection: Matrix::zeros(model.projection.rows(), model.projection.cols()),
        }
    }

    pub fn norm(&self) -> f64 {
        let sq: f64 = self
            .token_emb
            .as_slice()
            .iter()
            .chain(self.projection.as_slice())
            .map(|g| g * g)
            .sum();
        sq.sqrt()
    }
}

impl EncoderModel {
    /// Seeded initialization: token rows uniform in `±0.5/d_tok`, projection
    /// uniform in the same range scaled by `1/√d_tok`.
    pub fn init(vocab: Vocabulary, d_tok: usize, d_out: usize, seed: u64) -> Result<Self, EncoderError> {
        if d_tok < 2 || d_out < 2 {
            return Err(EncoderError::Dimensions { d_tok, d_out });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bound = 0.5 / d_tok as f64;
        let mut draw = |count: usize, scale: f64| -> Vec<f64> {
            (0..count)
                .map(|_| rng.random_range(-bound..bound) * scale)
                .collect()
        };
        let token_emb = Matrix::from_vec(vocab.len(), d_tok, draw(vocab.len() * d_tok, 1.0))
            .expect("sized");
        let projection = Matrix::from_vec(
            d_tok,
            d_out,
            draw(d_tok * d_out, 1.0 / (d_tok as f64).sqrt()),
        )
        .expect("sized");
        Ok(Self {
            vocab,
            token_emb,
            projection,
        })
    }

    pub fn from_parts(vocab: Vocabulary, token_emb: Matrix, projection: Matrix) -> Result<Self, EncoderError> {
        if token_emb.rows() != vocab.len() {
            return Err(EncoderError::Shape(format!(
                "{} token rows for {} vocabulary entries",
                token_emb.rows(),
                vocab.len()
            )));
        }
        if projection.rows() != token_emb.cols() {
            return Err(EncoderError::Shape(format!(
                "projection has {} rows, token dim is {}",
                projection.rows(),
                token_emb.cols()
            )));
        }
        if token_emb.cols() < 2 || projection.cols() < 2 {
            return Err(EncoderError::Dimensions {
                d_tok: token_emb.cols(),
                d_out: projection.cols(),
            });
        }
        if !token_emb.is_finite() || !projection.is_finite() {
            return Err(EncoderError::NonFinite);
        }
        Ok(Self {
            vocab,
            token_emb,
            projection,
        })
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn token_emb(&self) -> &Matrix {
        &self.token_emb
    }

    pub fn projection(&self) -> &Matrix {
        &self.projection
    }

    pub fn d_tok(&self) -> usize {
        self.token_emb.cols()
    }

    pub fn d_out(&self) -> usize {
        self.projection.cols()
    }

    /// Mutable views of the trainable tensors, in the order
    /// `[token_emb, projection]` used by the optimizer.
    pub fn params_mut(&mut self) -> [&mut [f64]; 2] {
        [self.token_emb.as_mut_slice(), self.projection.as_mut_slice()]
    }

    pub fn encode(&self, text: &str) -> EmbeddingVector {
        self.forward(&self.vocab.encode(text)).output
    }

    pub fn forward(&self, ids: &[u32]) -> Forward {
        let mut ids = ids.to_vec();
        ids.sort_unstable();
        let d_tok = self.d_tok();
        let mut pooled = vec![0.0; d_tok];
        for &id in &ids {
            for (p, e) in pooled.iter_mut().zip(self.token_emb.row(id as usize)) {
                *p += e;
            }
        }
        if !ids.is_empty() {
            let inv = 1.0 / ids.len() as f64;
            pooled.iter_mut().for_each(|p| *p *= inv);
        }

        let mut projected = vec![0.0; self.d_out()];
        for (i, &x) in pooled.iter().enumerate() {
            if x == 0.0 {
                continue;
            }
            for (z, w) in projected.iter_mut().zip(self.projection.row(i)) {
                *z += x * w;
            }
        }
        let norm = dot(&projected, &projected).sqrt();
        let output = if norm > 0.0 && norm.is_finite() {
            EmbeddingVector(projected.iter().map(|z| z / norm).collect())
        } else {
            let mut e1 = vec![0.0; self.d_out()];
            e1[0] = 1.0;
            EmbeddingVector(e1)
        };
        Forward {
            ids,
            pooled,
            projected,
            norm: if norm.is_finite() { norm } else { 0.0 },
            output,
        }
    }

    /// Accumulates `∂L/∂weights` into `grads` given `∂L/∂output`.
    pub fn backward(&self, fwd: &Forward, grad_output: &[f64], grads: &mut Gradients) {
        if fwd.is_fallback() || fwd.ids.is_empty() {
            return;
        }
        let y = fwd.output.as_slice();
        // Through y = z/‖z‖: ∂z = (g − y (y·g)) / ‖z‖.
        let yg = dot(y, grad_output);
        let dz: Vec<f64> = grad_output
            .iter()
            .zip(y)
            .map(|(g, yk)| (g - yk * yg) / fwd.norm)
            .collect();

        // Through z = Pᵀx.
        let mut dx = vec![0.0; self.d_tok()];
        for (i, (&x, dxi)) in fwd.pooled.iter().zip(dx.iter_mut()).enumerate() {
            let p_row = self.projection.row(i);
            let g_row = grads.projection.row_mut(i);
            for ((g, &dzk), &w) in g_row.iter_mut().zip(&dz).zip(p_row) {
                *g += x * dzk;
                *dxi += w * dzk;
            }
        }

        // Through mean pooling: every occurrence receives dx / L.
        let inv = 1.0 / fwd.ids.len() as f64;
        for &id in &fwd.ids {
            for (g, d) in grads.token_emb.row_mut(id as usize).iter_mut().zip(&dx) {
                *g += d * inv;
            }
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new(WEIGHTS_MAGIC, WEIGHTS_VERSION);
        w.u32(self.vocab.len() as u32);
        w.u32(self.d_tok() as u32);
        w.u32(self.d_out() as u32);
        for t in self.vocab.tokens() {
            w.str(t);
        }
        w.f64s(self.token_emb.as_slice());
        w.f64s(self.projection.as_slice());
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, EncoderError> {
        let mut r = Reader::open(bytes, WEIGHTS_MAGIC, WEIGHTS_VERSION)?;
        let n = r.u32()? as usize;
        let d_tok = r.u32()? as usize;
        let d_out = r.u32()? as usize;
        let mut tokens = Vec::with_capacity(n.min(1 << 20));
        for _ in 0..n {
            tokens.push(r.str()?);
        }
        let token_data = r.f64s(n * d_tok)?;
        let proj_data = r.f64s(d_tok * d_out)?;
        r.finish()?;

        if tokens.first().map(String::as_str) != Some(UNK_TOKEN) {
            return Err(FormatError::Invalid("first token is not the unknown token".into()).into());
        }
        let vocab = Vocabulary::from_tokens(tokens)
            .ok_or_else(|| FormatError::Invalid("duplicate token in vocabulary block".into()))?;
        let token_emb = Matrix::from_vec(n, d_tok, token_data).expect("sized");
        let projection = Matrix::from_vec(d_tok, d_out, proj_data).expect("sized");
        Self::from_parts(vocab, token_emb, projection)
    }

    pub fn save_weights(&self, path: impl AsRef<Path>) -> Result<(), EncoderError> {
        fs::write(path, self.to_bytes()).map_err(FormatError::from)?;
        Ok(())
    }

    pub fn load_weights(path: impl AsRef<Path>) -> Result<Self, EncoderError> {
        let bytes = fs::read(path).map_err(FormatError::from)?;
        Self::from_bytes(&bytes)
    }

    /// SHA-256 (hex) of the serialized weights.
    pub fn fingerprint(&self) -> String {
        hex(&Sha256::digest(self.to_bytes()))
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
