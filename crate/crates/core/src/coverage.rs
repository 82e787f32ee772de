//! Coverage criteria of a test suite against a state machine.
//!
//! Notation, with SMS the basic states fixed at extraction time:
//!
//! - SMFS: basic states holding at least one training final state.
//! - SMFS′: states (dynamic ones included) holding at least one test final state.
//! - SMLFS / SMLFS′: the (predicted label, state) pairs of training / test finals.
//! - W(l, S): number of training finals in S predicted as l.
//!
//! Final-state criteria:
//!
//! | criterion | value |
//! |---|---|
//! | NewFSCov | \|(SMFS′ ∩ SMS) − SMFS\| / \|SMS − SMFS\|, 0 when every state is final |
//! | OutFSCov | \|SMFS′ − SMS\| |
//! | BasicFSCov | \|SMFS′ ∩ SMFS\| / \|SMFS\| |
//! | BasicLFSCov | \|SMLFS ∩ SMLFS′\| / \|SMLFS\| |
//! | WeightedBasicLFSCov | Σ W over SMLFS ∩ SMLFS′ / Σ W over SMLFS |
//! | WeightedLFSCov | Σ 1/(W+1) over SMLFS′ |
//!
//! State and transition criteria (visit counts v and transition counts c
//! from training):
//!
//! | criterion | value |
//! |---|---|
//! | BasicSCov | \|visited ∩ SMS\| / \|SMS\| |
//! | WeightedSCov | Σ 1/(v+1) over visited ∩ SMS / Σ 1/(v+1) over SMS |
//! | OutSCov | number of dynamic states visited |
//! | BasicTCov | \|test ∩ training transitions\| / \|training transitions\| |
//! | WeightedTCov | Σ 1/(c+1) over covered / Σ 1/(c+1) over training transitions |
//!
//! Sums run over sets in ascending order so results are reproducible bit
//! for bit.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extract::{AbstractTrace, StateId, StateMachine};
use crate::trace::{Role, TraceSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Criterion {
    NewFSCov,
    OutFSCov,
    BasicFSCov,
    BasicLFSCov,
    WeightedBasicLFSCov,
    WeightedLFSCov,
    BasicSCov,
    WeightedSCov,
    OutSCov,
    BasicTCov,
    WeightedTCov,
}

impl Criterion {
    pub const ALL: [Criterion; 11] = [
        Criterion::NewFSCov,
        Criterion::OutFSCov,
        Criterion::BasicFSCov,
        Criterion::BasicLFSCov,
        Criterion::WeightedBasicLFSCov,
        Criterion::WeightedLFSCov,
        Criterion::BasicSCov,
        Criterion::WeightedSCov,
        Criterion::OutSCov,
        Criterion::BasicTCov,
        Criterion::WeightedTCov,
    ];

    /// The final-state and label criteria.
    pub const FINAL_STATE: [Criterion; 6] = [
        Criterion::NewFSCov,
        Criterion::OutFSCov,
        Criterion::BasicFSCov,
        Criterion::BasicLFSCov,
        Criterion::WeightedBasicLFSCov,
        Criterion::WeightedLFSCov,
    ];

    /// The state and transition criteria.
    pub const STATE_TRANSITION: [Criterion; 5] = [
        Criterion::BasicSCov,
        Criterion::WeightedSCov,
        Criterion::OutSCov,
        Criterion::BasicTCov,
        Criterion::WeightedTCov,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Criterion::NewFSCov => "NewFSCov",
            Criterion::OutFSCov => "OutFSCov",
            Criterion::BasicFSCov => "BasicFSCov",
            Criterion::BasicLFSCov => "BasicLFSCov",
            Criterion::WeightedBasicLFSCov => "WeightedBasicLFSCov",
            Criterion::WeightedLFSCov => "WeightedLFSCov",
            Criterion::BasicSCov => "BasicSCov",
            Criterion::WeightedSCov => "WeightedSCov",
            Criterion::OutSCov => "OutSCov",
            Criterion::BasicTCov => "BasicTCov",
            Criterion::WeightedTCov => "WeightedTCov",
        }
    }

    /// Counts rather than ratios.
    pub fn is_unbounded(self) -> bool {
        matches!(
            self,
            Criterion::OutFSCov | Criterion::WeightedLFSCov | Criterion::OutSCov
        )
    }

    /// Parse a comma-separated list, or `all`.
    pub fn parse_list(s: &str) -> Result<Vec<Criterion>> {
        if s.trim().eq_ignore_ascii_case("all") {
            return Ok(Criterion::ALL.to_vec());
        }
        s.split(',')
            .map(|p| p.trim().parse())
            .collect::<Result<Vec<_>>>()
    }
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Criterion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Criterion::ALL
            .iter()
            .copied()
            .find(|c| c.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::invalid(format!("unknown criterion `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionValue {
    pub criterion: Criterion,
    pub value: f64,
    pub numerator: f64,
    /// Absent for count criteria.
    pub denominator: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub suite_id: String,
    pub trace_count: usize,
    pub dynamic_states_created: usize,
    pub values: Vec<CriterionValue>,
}

impl CoverageReport {
    pub fn get(&self, c: Criterion) -> Option<f64> {
        self.values.iter().find(|v| v.criterion == c).map(|v| v.value)
    }
}

/// Training-side sets and weights shared by every suite evaluated against
/// one machine.
#[derive(Debug, Clone)]
pub struct CoverageContext<'a> {
    pub sm: &'a StateMachine,
    pub smfs: BTreeSet<StateId>,
    pub smlfs: BTreeSet<(usize, StateId)>,
    pub training_transitions: BTreeSet<(StateId, StateId)>,
    /// Median of W over SMLFS.
    pub median_label_weight: f64,
    /// Median visit count over SMS.
    pub median_visits: f64,
    /// Median count over training transitions.
    pub median_transition: f64,
}

pub fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.sort_by(f64::total_cmp);
    let m = values.len() / 2;
    if values.len() % 2 == 1 {
        values[m]
    } else {
        (values[m - 1] + values[m]) / 2.0
    }
}

impl<'a> CoverageContext<'a> {
    pub fn new(sm: &'a StateMachine) -> Self {
        let smfs: BTreeSet<StateId> = sm.final_states().into_iter().collect();
        let smlfs: BTreeSet<(usize, StateId)> = sm
            .histograms()
            .iter()
            .enumerate()
            .flat_map(|(s, h)| {
                h.iter()
                    .enumerate()
                    .filter(|(_, &c)| c > 0)
                    .map(move |(l, _)| (l, StateId(s)))
            })
            .collect();
        let training_transitions: BTreeSet<_> = sm
            .transitions()
            .iter()
            .filter(|(_, &c)| c > 0)
            .map(|(&k, _)| k)
            .collect();
        let mut w: Vec<f64> = smlfs
            .iter()
            .map(|&(l, s)| sm.final_count(s, l) as f64)
            .collect();
        let mut v: Vec<f64> = sm.visits().iter().map(|&c| c as f64).collect();
        let mut t: Vec<f64> = training_transitions
            .iter()
            .map(|&(a, b)| sm.transition_count(a, b) as f64)
            .collect();
        CoverageContext {
            sm,
            smfs,
            smlfs,
            training_transitions,
            median_label_weight: median(&mut w),
            median_visits: median(&mut v),
            median_transition: median(&mut t),
        }
    }

    fn weight(&self, label: usize, s: StateId) -> u64 {
        self.sm.final_count(s, label)
    }

    /// Whether a trace belongs to the subset a criterion covers, used when
    /// testing criteria for significance.
    ///
    /// - NewFSCov: final state in SMS − SMFS.
    /// - OutFSCov: final state is dynamic.
    /// - BasicFSCov: final state in SMFS.
    /// - BasicLFSCov: (label, final) in SMLFS.
    /// - WeightedBasicLFSCov: (label, final) in SMLFS with W at or above the median.
    /// - WeightedLFSCov: W(label, final) at or below the median, unseen pairs counting 0.
    /// - BasicSCov: every visited state is basic.
    /// - WeightedSCov: visits a basic state whose visit count is at or below the median.
    /// - OutSCov: visits a dynamic state.
    /// - BasicTCov: every transition was seen in training.
    /// - WeightedTCov: takes a training transition whose count is at or below the median.
    pub fn covers(&self, criterion: Criterion, at: &AbstractTrace) -> bool {
        let sm = self.sm;
        let f = at.final_state;
        let pair = at.predicted_label.map(|l| (l, f));
        match criterion {
            Criterion::NewFSCov => sm.is_basic(f) && !self.smfs.contains(&f),
            Criterion::OutFSCov => !sm.is_basic(f),
            Criterion::BasicFSCov => self.smfs.contains(&f),
            Criterion::BasicLFSCov => pair.is_some_and(|p| self.smlfs.contains(&p)),
            Criterion::WeightedBasicLFSCov => pair.is_some_and(|(l, s)| {
                self.smlfs.contains(&(l, s)) && self.weight(l, s) as f64 >= self.median_label_weight
            }),
            Criterion::WeightedLFSCov => {
                pair.is_some_and(|(l, s)| self.weight(l, s) as f64 <= self.median_label_weight)
            }
            Criterion::BasicSCov => at.state_ids.iter().all(|&s| sm.is_basic(s)),
            Criterion::WeightedSCov => at
                .state_ids
                .iter()
                .any(|&s| sm.is_basic(s) && sm.visits()[s.0] as f64 <= self.median_visits),
            Criterion::OutSCov => at.state_ids.iter().any(|&s| !sm.is_basic(s)),
            Criterion::BasicTCov => at
                .transitions()
                .all(|t| self.training_transitions.contains(&t)),
            Criterion::WeightedTCov => at.transitions().any(|(a, b)| {
                self.training_transitions.contains(&(a, b))
                    && sm.transition_count(a, b) as f64 <= self.median_transition
            }),
        }
    }

    /// Evaluate criteria over already-mapped traces.
    pub fn evaluate(&self, traces: &[AbstractTrace], criteria: &[Criterion]) -> Result<Vec<CriterionValue>> {
        let sm = self.sm;
        let n = sm.basic_count();
        let finals: BTreeSet<StateId> = traces.iter().map(|t| t.final_state).collect();
        let pairs: BTreeSet<(usize, StateId)> = traces
            .iter()
            .filter_map(|t| Some((t.predicted_label?, t.final_state)))
            .collect();
        let visited: BTreeSet<StateId> = traces.iter().flat_map(|t| t.state_ids.iter().copied()).collect();
        let test_transitions: BTreeSet<(StateId, StateId)> =
            traces.iter().flat_map(|t| t.transitions()).collect();

        let ratio = |c: Criterion, num: f64, den: f64| -> Result<CriterionValue> {
            if den == 0.0 {
                return Err(Error::UndefinedCriterion {
                    criterion: c.name(),
                    reason: "zero denominator".into(),
                });
            }
            Ok(CriterionValue {
                criterion: c,
                value: num / den,
                numerator: num,
                denominator: Some(den),
            })
        };
        let count = |c: Criterion, num: f64| CriterionValue {
            criterion: c,
            value: num,
            numerator: num,
            denominator: None,
        };
        let inv = |x: u64| 1.0 / (x as f64 + 1.0);

        criteria
            .iter()
            .map(|&c| match c {
                Criterion::NewFSCov => {
                    let den = (n - self.smfs.len()) as f64;
                    let num = finals
                        .iter()
                        .filter(|s| sm.is_basic(**s) && !self.smfs.contains(s))
                        .count() as f64;
                    if den == 0.0 {
                        Ok(CriterionValue {
                            criterion: c,
                            value: 0.0,
                            numerator: num,
                            denominator: Some(0.0),
                        })
                    } else {
                        ratio(c, num, den)
                    }
                }
                Criterion::OutFSCov => Ok(count(
                    c,
                    finals.iter().filter(|s| !sm.is_basic(**s)).count() as f64,
                )),
                Criterion::BasicFSCov => ratio(
                    c,
                    finals.intersection(&self.smfs).count() as f64,
                    self.smfs.len() as f64,
                ),
                Criterion::BasicLFSCov => ratio(
                    c,
                    pairs.intersection(&self.smlfs).count() as f64,
                    self.smlfs.len() as f64,
                ),
                Criterion::WeightedBasicLFSCov => {
                    let num: f64 = self
                        .smlfs
                        .intersection(&pairs)
                        .map(|&(l, s)| self.weight(l, s) as f64)
                        .sum();
                    let den: f64 = self.smlfs.iter().map(|&(l, s)| self.weight(l, s) as f64).sum();
                    ratio(c, num, den)
                }
                Criterion::WeightedLFSCov => Ok(count(
                    c,
                    pairs.iter().map(|&(l, s)| inv(self.weight(l, s))).sum(),
                )),
                Criterion::BasicSCov => ratio(
                    c,
                    visited.iter().filter(|s| sm.is_basic(**s)).count() as f64,
                    n as f64,
                ),
                Criterion::WeightedSCov => {
                    let num: f64 = visited
                        .iter()
                        .filter(|s| sm.is_basic(**s))
                        .map(|s| inv(sm.visits()[s.0]))
                        .sum();
                    let den: f64 = sm.visits().iter().map(|&v| inv(v)).sum();
                    ratio(c, num, den)
                }
                Criterion::OutSCov => Ok(count(
                    c,
                    visited.iter().filter(|s| !sm.is_basic(**s)).count() as f64,
                )),
                Criterion::BasicTCov => ratio(
                    c,
                    test_transitions.intersection(&self.training_transitions).count() as f64,
                    self.training_transitions.len() as f64,
                ),
                Criterion::WeightedTCov => {
                    let num: f64 = self
                        .training_transitions
                        .intersection(&test_transitions)
                        .map(|&(a, b)| inv(sm.transition_count(a, b)))
                        .sum();
                    let den: f64 = self
                        .training_transitions
                        .iter()
                        .map(|&(a, b)| inv(sm.transition_count(a, b)))
                        .sum();
                    ratio(c, num, den)
                }
            })
            .collect()
    }
}

fn check_suite(sm: &StateMachine, suite: &TraceSet) -> Result<()> {
    if suite.role() != Role::Test {
        return Err(Error::invalid("coverage needs a trace set with the test role"));
    }
    if suite.dimension() != sm.discretizer().input_dim() {
        return Err(Error::DimensionMismatch {
            context: "suite vs state machine".into(),
            expected: sm.discretizer().input_dim(),
            actual: suite.dimension(),
        });
    }
    if suite.label_count() != sm.label_count() {
        return Err(Error::invalid(format!(
            "suite has {} labels but the state machine has {}",
            suite.label_count(),
            sm.label_count()
        )));
    }
    Ok(())
}

/// Map a suite (dynamic states shared within the suite only) and evaluate
/// the given criteria.
pub fn evaluate(
    sm: &StateMachine,
    suite: &TraceSet,
    suite_id: &str,
    criteria: &[Criterion],
) -> Result<CoverageReport> {
    check_suite(sm, suite)?;
    let (traces, created) = sm.map_suite(suite.traces())?;
    let ctx = CoverageContext::new(sm);
    Ok(CoverageReport {
        suite_id: suite_id.to_string(),
        trace_count: traces.len(),
        dynamic_states_created: created,
        values: ctx.evaluate(&traces, criteria)?,
    })
}

/// Like [`evaluate`], but a criterion with a zero denominator is listed
/// with its reason instead of failing the whole report.
pub fn evaluate_defined(
    sm: &StateMachine,
    suite: &TraceSet,
    suite_id: &str,
    criteria: &[Criterion],
) -> Result<(CoverageReport, Vec<(Criterion, String)>)> {
    check_suite(sm, suite)?;
    let (traces, created) = sm.map_suite(suite.traces())?;
    let ctx = CoverageContext::new(sm);
    let mut values = Vec::new();
    let mut undefined = Vec::new();
    for &c in criteria {
        match ctx.evaluate(&traces, &[c]) {
            Ok(mut v) => values.append(&mut v),
            Err(e @ Error::UndefinedCriterion { .. }) => undefined.push((c, e.to_string())),
            Err(e) => return Err(e),
        }
    }
    let report = CoverageReport {
        suite_id: suite_id.to_string(),
        trace_count: traces.len(),
        dynamic_states_created: created,
        values,
    };
    Ok((report, undefined))
}

/// The six final-state and label criteria.
pub fn evaluate_suite(sm: &StateMachine, suite: &TraceSet, suite_id: &str) -> Result<CoverageReport> {
    evaluate(sm, suite, suite_id, &Criterion::FINAL_STATE)
}

/// The five state and transition criteria.
pub fn evaluate_state_transition(sm: &StateMachine, suite: &TraceSet, suite_id: &str) -> Result<CoverageReport> {
    evaluate(sm, suite, suite_id, &Criterion::STATE_TRANSITION)
}
