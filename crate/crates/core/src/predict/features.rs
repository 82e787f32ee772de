use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::extract::{AbstractTrace, StateMachine};

pub const FEATURE_COUNT: usize = 6;

/// Column order used by the tree.
pub const FEATURE_NAMES: [&str; FEATURE_COUNT] = ["NT", "NS", "FSSR", "CFS", "TP", "TPM"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRow {
    pub trace_id: String,
    /// Distinct transitions never taken in training.
    pub nt: u64,
    /// Distinct dynamic states visited.
    pub ns: u64,
    /// Share of the final state's training finals carrying the predicted label.
    pub fssr: f64,
    /// Count of the final state's training finals carrying the predicted label.
    pub cfs: u64,
    /// Product of transition probabilities.
    pub tp: f64,
    /// Mean of transition probabilities.
    pub tpm: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<bool>,
}

impl FeatureRow {
    pub fn values(&self) -> [f64; FEATURE_COUNT] {
        [
            self.nt as f64,
            self.ns as f64,
            self.fssr,
            self.cfs as f64,
            self.tp,
            self.tpm,
        ]
    }
}

pub fn extract_features(sm: &StateMachine, at: &AbstractTrace) -> FeatureRow {
    let unseen: BTreeSet<_> = at
        .transitions()
        .filter(|&(a, b)| sm.transition_count(a, b) == 0)
        .collect();
    let dynamic: BTreeSet<_> = at.state_ids.iter().filter(|s| !sm.is_basic(**s)).collect();
    let f = at.final_state;
    let total = sm.final_total(f);
    let cfs = at.predicted_label.map_or(0, |l| sm.final_count(f, l));
    let fssr = if total == 0 { 0.0 } else { cfs as f64 / total as f64 };
    let probs: Vec<f64> = at.transitions().map(|(a, b)| sm.transition_prob(a, b)).collect();
    let (tp, tpm) = if probs.is_empty() {
        (1.0, 1.0)
    } else {
        (
            probs.iter().product(),
            probs.iter().sum::<f64>() / probs.len() as f64,
        )
    };
    FeatureRow {
        trace_id: at.trace_id.clone(),
        nt: unseen.len() as u64,
        ns: dynamic.len() as u64,
        fssr,
        cfs,
        tp,
        tpm,
        error: at.is_error(),
    }
}

pub fn extract_all(sm: &StateMachine, traces: &[AbstractTrace]) -> Vec<FeatureRow> {
    traces.par_iter().map(|t| extract_features(sm, t)).collect()
}
