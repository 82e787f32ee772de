//! Choosing the number of clusters by goodness.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extract::{extract, KMeansParams, Method};
use crate::metrics::{score, SmScore};
use crate::trace::TraceSet;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepEntry {
    pub k: usize,
    pub score: SmScore,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub seed: u64,
    pub exponent: i32,
    pub entries: Vec<SweepEntry>,
    /// Highest goodness among entries with scale ≥ 1, ties to the smaller K.
    pub recommended: Option<usize>,
}

/// Pick the recommended K from scored entries.
pub fn recommend(entries: &[SweepEntry]) -> Option<usize> {
    entries
        .iter()
        .filter(|e| e.score.scale >= 1.0)
        .fold(None::<&SweepEntry>, |best, e| match best {
            Some(b) if b.score.goodness > e.score.goodness => Some(b),
            Some(b) if b.score.goodness == e.score.goodness && b.k <= e.k => Some(b),
            _ => Some(e),
        })
        .map(|e| e.k)
}

/// Extract and score one k-means machine per K.
pub fn sweep_k(training: &TraceSet, k_list: &[usize], seed: u64, exponent: i32) -> Result<SweepReport> {
    if k_list.is_empty() {
        return Err(Error::invalid("K list is empty"));
    }
    let mut ks = k_list.to_vec();
    ks.sort_unstable();
    ks.dedup();
    let entries = ks
        .iter()
        .map(|&k| {
            let sm = extract(training, &Method::Kmeans(KMeansParams::new(k, seed)))?;
            Ok(SweepEntry {
                k,
                score: score(&sm, exponent)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepReport {
        seed,
        exponent,
        recommended: recommend(&entries),
        entries,
    })
}
