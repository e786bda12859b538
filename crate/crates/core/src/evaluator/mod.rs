//! Retrieval evaluation: precision@k, recall@k and hit-rate@k, aggregated over
//! a dataset and broken down by the number of relevant files per question.

mod metrics;
mod report;

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::QuerySample;
use crate::encoder::EncoderModel;
use crate::retrieval::{DescriptorIndex, RetrievalError};

pub use metrics::{hit_at_k, precision_at_k, recall_at_k};
pub use report::{emitters, CsvReport, JsonReport, ReportEmitter, TextTable};

pub const DEFAULT_K: usize = 10;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("relevant file set is empty")]
    EmptyRelevant,
    #[error("k must be >= 1")]
    ZeroK,
    #[error("no samples to evaluate")]
    NoSamples,
    #[error("sample {index}: {source}")]
    Sample {
        index: usize,
        source: Box<EvalError>,
    },
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error("cannot write report: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot parse report: {0}")]
    Parse(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleResult {
    pub sample: QuerySample,
    pub retrieved: Vec<String>,
    pub precision_at_k: f64,
    pub recall_at_k: f64,
    pub hit: u8,
}

impl SampleResult {
    pub fn score(sample: &QuerySample, retrieved: Vec<String>, k: usize) -> Result<Self, EvalError> {
        let rel = &sample.relevant_files;
        Ok(Self {
            precision_at_k: precision_at_k(rel, &retrieved, k)?,
            recall_at_k: recall_at_k(rel, &retrieved, k)?,
            hit: hit_at_k(rel, &retrieved, k)?,
            sample: sample.clone(),
            retrieved,
        })
    }
}

/// Hit rate and question count for one value of N.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NBreakdown {
    pub hit_rate: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub k: usize,
    pub precision: f64,
    pub recall: f64,
    pub hit_rate: f64,
    pub per_n: BTreeMap<usize, NBreakdown>,
    pub sample_count: usize,
}

impl EvalReport {
    /// Unweighted means over `results`, plus the per-N hit-rate breakdown.
    /// Sums run in input order, so the report does not depend on how the
    /// results were computed.
    pub fn from_results(results: &[SampleResult], k: usize) -> Result<Self, EvalError> {
        if results.is_empty() {
            return Err(EvalError::NoSamples);
        }
        let total = results.len() as f64;
        let mut per_n: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
        let (mut p, mut r, mut h) = (0.0, 0.0, 0usize);
        for res in results {
            p += res.precision_at_k;
            r += res.recall_at_k;
            h += res.hit as usize;
            let e = per_n.entry(res.sample.n()).or_default();
            e.0 += res.hit as usize;
            e.1 += 1;
        }
        Ok(Self {
            k,
            precision: p / total,
            recall: r / total,
            hit_rate: h as f64 / total,
            per_n: per_n
                .into_iter()
                .map(|(n, (hits, count))| {
                    (
                        n,
                        NBreakdown {
                            hit_rate: hits as f64 / count as f64,
                            count,
                        },
                    )
                })
                .collect(),
            sample_count: results.len(),
        })
    }

    /// Checks the structural invariants: per-N counts sum to the sample
    /// count and every rate lies in `[0, 1]`.
    pub fn check_invariants(&self) -> Result<(), String> {
        let counted: usize = self.per_n.values().map(|b| b.count).sum();
        if counted != self.sample_count {
            return Err(format!("per-N counts sum to {counted}, expected {}", self.sample_count));
        }
        let rates = [self.precision, self.recall, self.hit_rate]
            .into_iter()
            .chain(self.per_n.values().map(|b| b.hit_rate));
        for r in rates {
            if !(0.0..=1.0).contains(&r) {
                return Err(format!("rate {r} outside [0, 1]"));
            }
        }
        Ok(())
    }
}

/// Retrieves the top-`k` files for every sample and scores them.
pub fn evaluate_samples(
    index: &DescriptorIndex,
    model: &EncoderModel,
    samples: &[QuerySample],
    k: usize,
) -> Result<Vec<SampleResult>, EvalError> {
    if k == 0 {
        return Err(EvalError::ZeroK);
    }
    let fingerprint = model.fingerprint();
    if fingerprint != index.fingerprint() {
        return Err(RetrievalError::FingerprintMismatch {
            index: index.fingerprint().to_string(),
            model: fingerprint,
        }
        .into());
    }
    samples
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            let vector = model.encode(&s.question);
            let retrieval = index.search_vector(&s.question, vector.as_slice(), k)?;
            SampleResult::score(s, retrieval.file_ids(), k).map_err(|e| EvalError::Sample {
                index: i,
                source: Box::new(e),
            })
        })
        .collect()
}

pub fn evaluate(
    index: &DescriptorIndex,
    model: &EncoderModel,
    samples: &[QuerySample],
    k: usize,
) -> Result<EvalReport, EvalError> {
    if samples.is_empty() {
        return Err(EvalError::NoSamples);
    }
    EvalReport::from_results(&evaluate_samples(index, model, samples, k)?, k)
}
