//! Set-based retrieval metrics at a cutoff `k`.
//!
//! Rank order inside the top-k is ignored: the downstream consumer needs the
//! right set of files, not their order.

use std::collections::{BTreeSet, HashSet};

use super::EvalError;

fn overlap(relevant: &BTreeSet<String>, retrieved: &[String], k: usize) -> Result<usize, EvalError> {
    if relevant.is_empty() {
        return Err(EvalError::EmptyRelevant);
    }
    if k == 0 {
        return Err(EvalError::ZeroK);
    }
    let top: HashSet<&str> = retrieved.iter().take(k).map(String::as_str).collect();
    Ok(relevant.iter().filter(|r| top.contains(r.as_str())).count())
}

/// `|relevant ∩ top-k| / k`. The denominator stays `k` even when fewer than
/// `k` files were retrievable.
pub fn precision_at_k(relevant: &BTreeSet<String>, retrieved: &[String], k: usize) -> Result<f64, EvalError> {
    Ok(overlap(relevant, retrieved, k)? as f64 / k as f64)
}

/// `|relevant ∩ top-k| / |relevant|`.
pub fn recall_at_k(relevant: &BTreeSet<String>, retrieved: &[String], k: usize) -> Result<f64, EvalError> {
    Ok(overlap(relevant, retrieved, k)? as f64 / relevant.len() as f64)
}

/// 1 if every relevant file is in the top-k, else 0.
pub fn hit_at_k(relevant: &BTreeSet<String>, retrieved: &[String], k: usize) -> Result<u8, EvalError> {
    Ok(u8::from(overlap(relevant, retrieved, k)? == relevant.len()))
}
