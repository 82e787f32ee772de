//! Quality scores of an extracted state machine.
//!
//! All functions work on the per-state final-label histograms, so they can
//! be applied to a [`StateMachine`] or to hand-built histograms directly.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extract::StateMachine;

pub const DEFAULT_EXPONENT: i32 = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmScore {
    pub purity: f64,
    pub richness: f64,
    pub goodness: f64,
    pub scale: f64,
    pub states_with_finals: usize,
    pub total_finals: u64,
    pub exponent: i32,
}

impl SmScore {
    /// Fewer final-bearing states than labels.
    pub fn lacks_discrimination(&self) -> bool {
        self.scale < 1.0
    }
}

fn totals(hist: &[Vec<u64>]) -> (u64, u64, usize) {
    let mut major = 0;
    let mut total = 0;
    let mut with_finals = 0;
    for h in hist {
        let s: u64 = h.iter().sum();
        if s > 0 {
            with_finals += 1;
            total += s;
            major += h.iter().copied().max().unwrap_or(0);
        }
    }
    (major, total, with_finals)
}

fn no_finals() -> Error {
    Error::invalid("state machine holds no final states")
}

pub fn purity_of(hist: &[Vec<u64>]) -> Result<f64> {
    let (major, total, _) = totals(hist);
    if total == 0 {
        return Err(no_finals());
    }
    Ok(major as f64 / total as f64)
}

pub fn richness_of(hist: &[Vec<u64>]) -> Result<f64> {
    let (_, total, with_finals) = totals(hist);
    if total == 0 {
        return Err(no_finals());
    }
    Ok(total as f64 / with_finals as f64)
}

pub fn goodness_of(hist: &[Vec<u64>], exponent: i32) -> Result<f64> {
    Ok(purity_of(hist)?.powi(exponent) * richness_of(hist)?)
}

pub fn scale_of(hist: &[Vec<u64>], label_count: usize) -> Result<f64> {
    if label_count == 0 {
        return Err(Error::invalid("label count must be positive"));
    }
    let (_, _, with_finals) = totals(hist);
    Ok(with_finals as f64 / label_count as f64)
}

pub fn score_histograms(hist: &[Vec<u64>], label_count: usize, exponent: i32) -> Result<SmScore> {
    let (_, total, with_finals) = totals(hist);
    let purity = purity_of(hist)?;
    let richness = richness_of(hist)?;
    Ok(SmScore {
        purity,
        richness,
        goodness: purity.powi(exponent) * richness,
        scale: scale_of(hist, label_count)?,
        states_with_finals: with_finals,
        total_finals: total,
        exponent,
    })
}

pub fn purity(sm: &StateMachine) -> Result<f64> {
    purity_of(sm.histograms())
}

pub fn richness(sm: &StateMachine) -> Result<f64> {
    richness_of(sm.histograms())
}

pub fn goodness(sm: &StateMachine, exponent: i32) -> Result<f64> {
    goodness_of(sm.histograms(), exponent)
}

pub fn scale(sm: &StateMachine) -> Result<f64> {
    scale_of(sm.histograms(), sm.label_count())
}

pub fn score(sm: &StateMachine, exponent: i32) -> Result<SmScore> {
    score_histograms(sm.histograms(), sm.label_count(), exponent)
}
