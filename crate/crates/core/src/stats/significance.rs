use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ks::{ks_two_sample, KsResult};
use crate::coverage::{CoverageContext, Criterion};
use crate::error::{Error, Result};
use crate::extract::{AbstractTrace, StateMachine};
use crate::trace::TraceSet;

pub const ALPHA: f64 = 0.05;

/// Share of traces whose predicted label matches the true label; `None`
/// for an empty slice.
pub fn accuracy(traces: &[&AbstractTrace]) -> Option<f64> {
    if traces.is_empty() {
        return None;
    }
    let correct = traces
        .iter()
        .filter(|t| t.is_error() == Some(false))
        .count();
    Some(correct as f64 / traces.len() as f64)
}

/// Map every suite independently, in parallel; each suite starts from the
/// machine's own dynamic states.
pub fn map_suites(sm: &StateMachine, suites: &[TraceSet]) -> Result<Vec<Vec<AbstractTrace>>> {
    suites
        .par_iter()
        .map(|suite| {
            for t in suite.traces() {
                if t.predicted_label.is_none() {
                    return Err(Error::NullLabel {
                        trace_id: t.id.clone(),
                        which: "predicted",
                    });
                }
                if t.true_label.is_none() {
                    return Err(Error::NullLabel {
                        trace_id: t.id.clone(),
                        which: "true",
                    });
                }
            }
            Ok(sm.map_suite(suite.traces())?.0)
        })
        .collect()
}

fn significance_of(
    ctx: &CoverageContext<'_>,
    mapped: &[Vec<AbstractTrace>],
    criterion: Criterion,
) -> Result<KsResult> {
    if mapped.len() < 2 {
        return Err(Error::invalid("criterion significance needs at least 2 suites"));
    }
    let mut full = Vec::new();
    let mut covered = Vec::new();
    for suite in mapped {
        let all: Vec<&AbstractTrace> = suite.iter().collect();
        if let Some(a) = accuracy(&all) {
            full.push(a);
        }
        let subset: Vec<&AbstractTrace> = suite.iter().filter(|t| ctx.covers(criterion, t)).collect();
        if let Some(a) = accuracy(&subset) {
            covered.push(a);
        }
    }
    if covered.len() < 2 || full.len() < 2 {
        return Err(Error::InsufficientCoverage {
            criterion: criterion.name(),
            non_empty: covered.len(),
        });
    }
    ks_two_sample(&full, &covered)
}

/// KS test of per-suite accuracy against per-suite accuracy restricted to
/// the traces a criterion covers (see [`CoverageContext::covers`]). Suites
/// with an empty covered subset are left out of the second sample.
pub fn criterion_significance(
    sm: &StateMachine,
    suites: &[TraceSet],
    criterion: Criterion,
) -> Result<KsResult> {
    let mapped = map_suites(sm, suites)?;
    significance_of(&CoverageContext::new(sm), &mapped, criterion)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignificanceRow {
    pub criterion: Criterion,
    pub result: Option<KsResult>,
    /// Set when the test could not be run.
    pub note: Option<String>,
}

impl SignificanceRow {
    pub fn significant(&self) -> bool {
        self.result.is_some_and(|r| r.p_value < ALPHA)
    }
}

/// One row per criterion, mapping the suites only once.
pub fn significance_matrix(
    sm: &StateMachine,
    suites: &[TraceSet],
    criteria: &[Criterion],
) -> Result<Vec<SignificanceRow>> {
    let mapped = map_suites(sm, suites)?;
    let ctx = CoverageContext::new(sm);
    criteria
        .iter()
        .map(|&c| match significance_of(&ctx, &mapped, c) {
            Ok(r) => Ok(SignificanceRow {
                criterion: c,
                result: Some(r),
                note: None,
            }),
            Err(e @ Error::InsufficientCoverage { .. }) => Ok(SignificanceRow {
                criterion: c,
                result: None,
                note: Some(e.to_string()),
            }),
            Err(e) => Err(e),
        })
        .collect()
}
