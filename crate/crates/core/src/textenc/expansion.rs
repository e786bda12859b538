//! Appending new tokens to a trained vocabulary.
//!
//! New rows are initialized from the moments of the existing embedding
//! matrix: `μ = (1/n) Σ mᵢ` and `σ = (1/n) (M − μ)ᵀ (M − μ)`. Either every new
//! row is set to `μ` ([`MeanExact`]) or drawn from `N(μ, σ)` ([`GaussianSample`]).
//! Using the mean keeps the new token's logit below the average existing
//! logit, which bounds the shift of the output distribution (see
//! [`super::toylm`]).

use nalgebra::{DMatrix, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use super::{tokenize, Vocabulary};
use crate::registry::Registry;
use crate::tensor::Matrix;

#[derive(Debug, Error, PartialEq)]
pub enum ExpansionError {
    #[error("token '{0}' is already in the vocabulary or listed twice")]
    DuplicateToken(String),
    #[error("token {0:?} is not a single tokenizer token")]
    InvalidToken(String),
    #[error("vocabulary too small for covariance: n = {0} (need at least 2)")]
    TooSmall(usize),
    #[error("embedding has {rows} rows but vocabulary has {vocab} tokens")]
    ShapeMismatch { rows: usize, vocab: usize },
}

/// Moments of the pre-expansion embedding matrix and the rows drawn from them.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpansionInit {
    pub mu: Vec<f64>,
    pub sigma: Matrix,
    pub sampled_rows: Matrix,
}

/// Strategy for producing embedding rows for newly added tokens.
pub trait NewRowInitializer: Send + Sync {
    fn name(&self) -> &'static str;

    /// Produces `count` rows given the moments of the existing matrix.
    fn init_rows(&self, mu: &[f64], sigma: &Matrix, count: usize, rng: &mut ChaCha8Rng) -> Matrix;
}

/// Every new row is exactly the mean of the existing rows.
#[derive(Debug, Default, Clone, Copy)]
pub struct MeanExact;

impl NewRowInitializer for MeanExact {
    fn name(&self) -> &'static str {
        "mean-exact"
    }

    fn init_rows(&self, mu: &[f64], _sigma: &Matrix, count: usize, _rng: &mut ChaCha8Rng) -> Matrix {
        let mut out = Matrix::zeros(count, mu.len());
        for i in 0..count {
            out.row_mut(i).copy_from_slice(mu);
        }
        out
    }
}

/// New rows are drawn from `N(μ, σ)`.
///
/// Sampling goes through an eigendecomposition of `σ`; eigenvalues that come
/// out slightly negative from rounding are clipped to zero.
#[derive(Debug, Default, Clone, Copy)]
pub struct GaussianSample;

impl NewRowInitializer for GaussianSample {
    fn name(&self) -> &'static str {
        "gaussian-sample"
    }

    fn init_rows(&self, mu: &[f64], sigma: &Matrix, count: usize, rng: &mut ChaCha8Rng) -> Matrix {
        let d = mu.len();
        let cov = DMatrix::from_row_slice(d, d, sigma.as_slice());
        let eig = SymmetricEigen::new(cov);
        // Columns of `factor` are eigenvectors scaled by √λ, so factor·z ~ N(0, σ).
        let mut factor = eig.eigenvectors.clone();
        for (j, &lambda) in eig.eigenvalues.iter().enumerate() {
            let s = lambda.max(0.0).sqrt();
            factor.column_mut(j).scale_mut(s);
        }
        let mut out = Matrix::zeros(count, d);
        let mut z = vec![0.0; d];
        for i in 0..count {
            for zj in z.iter_mut() {
                *zj = StandardNormal.sample(rng);
            }
            let row = out.row_mut(i);
            for (r, out_r) in row.iter_mut().enumerate() {
                let offset: f64 = (0..d).map(|c| factor[(r, c)] * z[c]).sum();
                *out_r = mu[r] + offset;
            }
        }
        out
    }
}

pub type InitializerFactory = fn() -> Box<dyn NewRowInitializer>;

/// Built-in initializers, by name.
pub fn initializers() -> Registry<InitializerFactory> {
    Registry::<InitializerFactory>::new("expansion initializer")
        .with("mean-exact", || Box::new(MeanExact))
        .with("gaussian-sample", || Box::new(GaussianSample))
}

/// Row mean `μ` and population covariance `σ` (1/n normalization).
///
/// `σ` is accumulated on the upper triangle and mirrored, so it is exactly
/// symmetric.
pub fn moment_stats(emb: &Matrix) -> (Vec<f64>, Matrix) {
    let (n, d) = (emb.rows(), emb.cols());
    let mut mu = vec![0.0; d];
    for row in emb.iter_rows() {
        for (m, v) in mu.iter_mut().zip(row) {
            *m += v;
        }
    }
    let inv_n = 1.0 / n as f64;
    mu.iter_mut().for_each(|m| *m *= inv_n);

    let mut sigma = Matrix::zeros(d, d);
    let mut centered = vec![0.0; d];
    for row in emb.iter_rows() {
        for ((c, v), m) in centered.iter_mut().zip(row).zip(&mu) {
            *c = v - m;
        }
        for a in 0..d {
            for b in a..d {
                let v = sigma.get(a, b) + centered[a] * centered[b];
                sigma.set(a, b, v);
            }
        }
    }
    for a in 0..d {
        for b in a..d {
            let v = sigma.get(a, b) * inv_n;
            sigma.set(a, b, v);
            sigma.set(b, a, v);
        }
    }
    (mu, sigma)
}

/// Appends `new_tokens` to `vocab` and matching rows to `emb`.
///
/// Original rows are untouched. The same `seed` always yields the same rows.
pub fn expand_vocab(
    vocab: &Vocabulary,
    emb: &Matrix,
    new_tokens: &[String],
    initializer: &dyn NewRowInitializer,
    seed: u64,
) -> Result<(Vocabulary, Matrix, ExpansionInit), ExpansionError> {
    if emb.rows() != vocab.len() {
        return Err(ExpansionError::ShapeMismatch {
            rows: emb.rows(),
            vocab: vocab.len(),
        });
    }
    if vocab.len() < 2 {
        return Err(ExpansionError::TooSmall(vocab.len()));
    }
    let mut expanded = vocab.clone();
    for t in new_tokens {
        if tokenize(t) != [t.as_str()] {
            return Err(ExpansionError::InvalidToken(t.clone()));
        }
        if !expanded.push(t.clone()) {
            return Err(ExpansionError::DuplicateToken(t.clone()));
        }
    }

    let (mu, sigma) = moment_stats(emb);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sampled_rows = initializer.init_rows(&mu, &sigma, new_tokens.len(), &mut rng);
    let mut new_emb = emb.clone();
    new_emb.append_rows(&sampled_rows);
    Ok((
        expanded,
        new_emb,
        ExpansionInit {
            mu,
            sigma,
            sampled_rows,
        },
    ))
}
