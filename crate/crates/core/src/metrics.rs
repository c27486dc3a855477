//! Ranking metrics for location prediction and the popularity
//! sensitivity analysis.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hits among the first `k` predictions, divided by `k`.
pub fn accuracy_at_k<S: AsRef<str>>(predicted: &[S], actual: &BTreeSet<String>, k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::InvalidInput("k must be positive".into()));
    }
    Ok(hits_at_k(predicted, actual, k) as f64 / k as f64)
}

pub fn hits_at_k<S: AsRef<str>>(predicted: &[S], actual: &BTreeSet<String>, k: usize) -> usize {
    predicted.iter().take(k).filter(|p| actual.contains(p.as_ref())).count()
}

/// 1/rank of the first correct prediction, 0 if none.
pub fn reciprocal_rank<S: AsRef<str>>(predicted: &[S], actual: &BTreeSet<String>) -> f64 {
    predicted
        .iter()
        .position(|p| actual.contains(p.as_ref()))
        .map_or(0.0, |i| 1.0 / (i + 1) as f64)
}

pub fn mrr<S: AsRef<str>>(ranked: &[Vec<S>], actual: &[BTreeSet<String>]) -> Result<f64> {
    if ranked.len() != actual.len() {
        return Err(Error::LengthMismatch(ranked.len(), actual.len()));
    }
    if ranked.is_empty() {
        return Err(Error::InvalidInput("no ranked lists".into()));
    }
    let total: f64 = ranked.iter().zip(actual).map(|(r, a)| reciprocal_rank(r, a)).sum();
    Ok(total / ranked.len() as f64)
}

/// Mean Accuracy@k and MRR over a set of (ranking, actual) pairs. Rankings
/// are cut to `k` before MRR, as a top-k list would be.
pub fn mean_scores(ranked: &[Vec<String>], actual: &[BTreeSet<String>], k: usize) -> Result<(f64, f64)> {
    if ranked.is_empty() {
        return Err(Error::InvalidInput("no ranked lists".into()));
    }
    let mut acc = 0.0;
    for (r, a) in ranked.iter().zip(actual) {
        acc += accuracy_at_k(r, a, k)?;
    }
    let cut: Vec<Vec<String>> = ranked.iter().map(|r| r.iter().take(k).cloned().collect()).collect();
    Ok((acc / ranked.len() as f64, mrr(&cut, actual)?))
}

/// APs ordered by training visit count, descending; ties by id.
pub fn popularity_order(counts: &BTreeMap<String, usize>) -> Vec<String> {
    let mut aps: Vec<(&String, &usize)> = counts.iter().collect();
    aps.sort_by(|a, b| b.1.cmp(a.1).then(a.0.cmp(b.0)));
    aps.into_iter().map(|(a, _)| a.clone()).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensitivityPoint {
    pub n: usize,
    pub acc: f64,
    /// Test cases left once emptied actual sets are skipped.
    pub cases: usize,
}

/// Accuracy@k after removing the `n` most popular APs from both the actual
/// sets and the rankings, for each `n`. Cases whose actual set becomes
/// empty are skipped.
pub fn sensitivity_remove_top_n(
    ranked: &[Vec<String>],
    actual: &[BTreeSet<String>],
    popularity: &[String],
    n_range: impl IntoIterator<Item = usize>,
    k: usize,
    total_aps: usize,
) -> Result<Vec<SensitivityPoint>> {
    if ranked.len() != actual.len() {
        return Err(Error::LengthMismatch(ranked.len(), actual.len()));
    }
    let mut out = Vec::new();
    for n in n_range {
        if n >= total_aps {
            return Err(Error::InvalidInput(format!("cannot remove {n} of {total_aps} APs")));
        }
        let removed: BTreeSet<&str> = popularity.iter().take(n).map(String::as_str).collect();
        let mut sum = 0.0;
        let mut cases = 0;
        for (r, a) in ranked.iter().zip(actual) {
            let a: BTreeSet<String> = a.iter().filter(|x| !removed.contains(x.as_str())).cloned().collect();
            if a.is_empty() {
                continue;
            }
            let r: Vec<&String> = r.iter().filter(|x| !removed.contains(x.as_str())).collect();
            sum += accuracy_at_k(&r.iter().map(|s| s.as_str()).collect::<Vec<_>>(), &a, k)?;
            cases += 1;
        }
        let acc = if cases == 0 { 0.0 } else { sum / cases as f64 };
        out.push(SensitivityPoint { n, acc, cases });
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub method: String,
    pub k: usize,
    pub accuracy_at_k: f64,
    pub mrr: f64,
    pub sensitivity: Vec<SensitivityPoint>,
}
