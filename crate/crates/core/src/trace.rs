//! Traces, trace sets and the on-disk trace bundle.
//!
//! A bundle is a directory holding `manifest.json` and `traces.jsonl`:
//!
//! ```text
//! manifest.json  {"version":1,"dimension":D,"label_count":L,"labels":[..],
//!                 "role":"training"|"test","trace_count":N,"max_timesteps":MTS}
//! traces.jsonl   {"id":..,"predicted_label":int|null,"true_label":int|null,"states":[[..]..]}
//! ```
//!
//! Floats are written with the shortest representation that parses back to
//! the identical `f64`.

use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader};
use std::ops::Deref;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{check_finite, Error, Result};
use crate::fsutil;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const TRACES_FILE: &str = "traces.jsonl";
pub const BUNDLE_VERSION: u32 = 1;

/// One hidden-state vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StateVector(pub Vec<f64>);

impl StateVector {
    pub fn new(values: Vec<f64>) -> Self {
        StateVector(values)
    }

    pub fn zeros(dim: usize) -> Self {
        StateVector(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for StateVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl From<Vec<f64>> for StateVector {
    fn from(v: Vec<f64>) -> Self {
        StateVector(v)
    }
}

/// Hidden states of one input plus the model's decision on it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub id: String,
    pub predicted_label: Option<usize>,
    pub true_label: Option<usize>,
    pub states: Vec<StateVector>,
}

impl Trace {
    pub fn new(
        id: impl Into<String>,
        states: Vec<StateVector>,
        predicted_label: Option<usize>,
        true_label: Option<usize>,
    ) -> Self {
        Trace {
            id: id.into(),
            states,
            predicted_label,
            true_label,
        }
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn final_state(&self) -> Option<&StateVector> {
        self.states.last()
    }

    /// `Some(true)` when both labels are present and disagree.
    pub fn is_error(&self) -> Option<bool> {
        Some(self.predicted_label? != self.true_label?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Training,
    Test,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Role::Training => f.write_str("training"),
            Role::Test => f.write_str("test"),
        }
    }
}

/// A validated collection of traces sharing one state dimension and label set.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceSet {
    traces: Vec<Trace>,
    labels: Vec<String>,
    dimension: usize,
    role: Role,
}

impl TraceSet {
    /// Build and validate a set. Label names default to the label indices.
    pub fn new(
        traces: Vec<Trace>,
        labels: Vec<String>,
        dimension: usize,
        role: Role,
    ) -> Result<Self> {
        let set = TraceSet {
            traces,
            labels,
            dimension,
            role,
        };
        set.validate()?;
        Ok(set)
    }

    /// Convenience constructor naming labels `"0".."L-1"`.
    pub fn with_label_count(
        traces: Vec<Trace>,
        label_count: usize,
        dimension: usize,
        role: Role,
    ) -> Result<Self> {
        let labels = (0..label_count).map(|l| l.to_string()).collect();
        Self::new(traces, labels, dimension, role)
    }

    pub fn validate(&self) -> Result<()> {
        if self.labels.len() < 2 {
            return Err(Error::invalid(format!(
                "a trace set needs at least 2 labels, got {}",
                self.labels.len()
            )));
        }
        if self.dimension == 0 {
            return Err(Error::invalid("state dimension must be positive"));
        }
        for trace in &self.traces {
            validate_trace(trace, self.dimension, self.labels.len())?;
        }
        Ok(())
    }

    pub fn traces(&self) -> &[Trace] {
        &self.traces
    }

    pub fn into_traces(self) -> Vec<Trace> {
        self.traces
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label_count(&self) -> usize {
        self.labels.len()
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn len(&self) -> usize {
        self.traces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.traces.is_empty()
    }

    pub fn max_timesteps(&self) -> usize {
        self.traces.iter().map(Trace::len).max().unwrap_or(0)
    }

    /// Same labels and dimension, different traces.
    pub fn with_traces(&self, traces: Vec<Trace>, role: Role) -> Result<Self> {
        TraceSet::new(traces, self.labels.clone(), self.dimension, role)
    }
}

pub(crate) fn validate_trace(trace: &Trace, dimension: usize, label_count: usize) -> Result<()> {
    if trace.states.is_empty() {
        return Err(Error::invalid(format!("trace `{}` has no states", trace.id)));
    }
    for (step, state) in trace.states.iter().enumerate() {
        if state.dim() != dimension {
            return Err(Error::DimensionMismatch {
                context: format!("trace `{}` step {step}", trace.id),
                expected: dimension,
                actual: state.dim(),
            });
        }
        check_finite(state, || format!("trace `{}` step {step}", trace.id))?;
    }
    for label in [trace.predicted_label, trace.true_label].into_iter().flatten() {
        if label >= label_count {
            return Err(Error::UnknownLabel {
                trace_id: trace.id.clone(),
                label,
                label_count,
            });
        }
    }
    Ok(())
}

/// Whether the model got one input wrong.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledOutcome {
    pub trace_id: String,
    pub error: bool,
}

/// Error flag per trace; every trace must carry both labels.
pub fn derive_outcomes(set: &TraceSet) -> Result<Vec<LabeledOutcome>> {
    set.traces()
        .iter()
        .map(|t| {
            let predicted = t.predicted_label.ok_or_else(|| Error::NullLabel {
                trace_id: t.id.clone(),
                which: "predicted",
            })?;
            let truth = t.true_label.ok_or_else(|| Error::NullLabel {
                trace_id: t.id.clone(),
                which: "true",
            })?;
            Ok(LabeledOutcome {
                trace_id: t.id.clone(),
                error: predicted != truth,
            })
        })
        .collect()
}

/// Fraction of outcomes flagged as errors; 0 for an empty slice.
pub fn error_rate(outcomes: &[LabeledOutcome]) -> f64 {
    if outcomes.is_empty() {
        return 0.0;
    }
    outcomes.iter().filter(|o| o.error).count() as f64 / outcomes.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub dimension: usize,
    pub label_count: usize,
    pub labels: Vec<String>,
    pub role: Role,
    pub trace_count: usize,
    pub max_timesteps: usize,
}

impl Manifest {
    pub fn describe(set: &TraceSet) -> Self {
        Manifest {
            version: BUNDLE_VERSION,
            dimension: set.dimension(),
            label_count: set.label_count(),
            labels: set.labels().to_vec(),
            role: set.role(),
            trace_count: set.len(),
            max_timesteps: set.max_timesteps(),
        }
    }
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| Error::Malformed {
        path: path.clone(),
        line: e.line(),
        message: e.to_string(),
    })?;
    if manifest.version != BUNDLE_VERSION {
        return Err(Error::Malformed {
            path,
            line: 1,
            message: format!("unsupported bundle version {}", manifest.version),
        });
    }
    if manifest.labels.len() != manifest.label_count {
        return Err(Error::Malformed {
            path,
            line: 1,
            message: format!(
                "label_count is {} but {} label names are listed",
                manifest.label_count,
                manifest.labels.len()
            ),
        });
    }
    Ok(manifest)
}

/// Parse one `traces.jsonl` line.
///
/// JSON has no literal for NaN or infinity, so a line that fails to parse
/// because of such a token is reported as a non-finite value rather than as
/// a syntax error.
pub fn parse_trace_line(line: &str, path: &Path, line_no: usize) -> Result<Trace> {
    match serde_json::from_str::<Trace>(line) {
        Ok(trace) => Ok(trace),
        Err(e) => {
            let msg = e.to_string();
            if contains_non_finite_token(line) || msg.contains("number out of range") {
                Err(Error::NonFinite {
                    context: format!("{}:{line_no}", path.display()),
                })
            } else {
                Err(Error::Malformed {
                    path: path.to_path_buf(),
                    line: line_no,
                    message: msg,
                })
            }
        }
    }
}

fn contains_non_finite_token(line: &str) -> bool {
    // Skip string literals so that an id like "NaN-7" does not count.
    let mut in_string = false;
    let mut escaped = false;
    let mut bare = String::new();
    for c in line.chars() {
        if in_string {
            if escaped {
                escaped = false;
            } else if c == '\\' {
                escaped = true;
            } else if c == '"' {
                in_string = false;
            }
        } else if c == '"' {
            in_string = true;
        } else {
            bare.push(c);
        }
    }
    bare.contains("NaN") || bare.contains("Infinity") || bare.contains("inf")
}

/// Load and validate a bundle directory. Traces keep their file order.
pub fn load_trace_bundle(dir: &Path) -> Result<TraceSet> {
    let manifest = read_manifest(dir)?;
    let path = dir.join(TRACES_FILE);
    let file = fs::File::open(&path).map_err(|e| Error::io(&path, e))?;
    let mut traces = Vec::with_capacity(manifest.trace_count);
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(&path, e))?;
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let trace = parse_trace_line(&line, &path, line_no)?;
        validate_trace(&trace, manifest.dimension, manifest.label_count).map_err(|e| match e {
            Error::DimensionMismatch {
                context,
                expected,
                actual,
            } => Error::DimensionMismatch {
                context: format!("{}:{line_no}: {context}", path.display()),
                expected,
                actual,
            },
            other => other,
        })?;
        traces.push(trace);
    }
    if traces.len() != manifest.trace_count {
        return Err(Error::Malformed {
            path: dir.join(MANIFEST_FILE),
            line: 1,
            message: format!(
                "manifest declares {} traces, {} found",
                manifest.trace_count,
                traces.len()
            ),
        });
    }
    let set = TraceSet::new(traces, manifest.labels, manifest.dimension, manifest.role)?;
    if set.max_timesteps() != manifest.max_timesteps {
        return Err(Error::Malformed {
            path: dir.join(MANIFEST_FILE),
            line: 1,
            message: format!(
                "manifest declares max_timesteps {}, traces have {}",
                manifest.max_timesteps,
                set.max_timesteps()
            ),
        });
    }
    Ok(set)
}

/// Serialized `traces.jsonl` content.
pub fn encode_traces(traces: &[Trace]) -> Result<String> {
    let mut out = String::new();
    for t in traces {
        let line = serde_json::to_string(t).map_err(|e| Error::Json {
            context: format!("encoding trace `{}`", t.id),
            source: e,
        })?;
        out.push_str(&line);
        out.push('\n');
    }
    Ok(out)
}

/// Write a bundle directory; the directory appears only once fully written.
pub fn save_trace_bundle(set: &TraceSet, dir: &Path) -> Result<()> {
    set.validate()?;
    let manifest = serde_json::to_string_pretty(&Manifest::describe(set)).map_err(|e| {
        Error::Json {
            context: "encoding manifest".into(),
            source: e,
        }
    })?;
    let body = encode_traces(set.traces())?;
    fsutil::write_dir_atomic(dir, |tmp| {
        fs::write(tmp.join(MANIFEST_FILE), manifest.as_bytes())
            .map_err(|e| Error::io(tmp.join(MANIFEST_FILE), e))?;
        fs::write(tmp.join(TRACES_FILE), body.as_bytes())
            .map_err(|e| Error::io(tmp.join(TRACES_FILE), e))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trace(id: &str, states: Vec<Vec<f64>>, p: Option<usize>, t: Option<usize>) -> Trace {
        Trace::new(id, states.into_iter().map(StateVector).collect(), p, t)
    }

    fn write_bundle(dir: &Path, manifest: &str, lines: &[&str]) {
        fs::create_dir_all(dir).unwrap();
        fs::write(dir.join(MANIFEST_FILE), manifest).unwrap();
        fs::write(dir.join(TRACES_FILE), lines.join("\n")).unwrap();
    }

    const MANIFEST_2X3: &str = r#"{"version":1,"dimension":3,"label_count":2,"labels":["a","b"],"role":"training","trace_count":2,"max_timesteps":2}"#;

    #[test]
    fn loads_hand_written_bundle() {
        let tmp = tempfile::tempdir().unwrap();
        write_bundle(
            tmp.path(),
            MANIFEST_2X3,
            &[
                r#"{"id":"t0","predicted_label":0,"true_label":0,"states":[[0.1,0.2,0.3],[1,2,3]]}"#,
                r#"{"id":"t1","predicted_label":1,"true_label":null,"states":[[-1,0,1]]}"#,
            ],
        );
        let set = load_trace_bundle(tmp.path()).unwrap();
        assert_eq!(set.len(), 2);
        assert_eq!(set.dimension(), 3);
        assert_eq!(set.traces()[0].id, "t0");
        assert_eq!(set.traces()[1].true_label, None);
        assert_eq!(set.max_timesteps(), 2);
    }

    #[test]
    fn nan_activation_is_reported_as_non_finite() {
        let tmp = tempfile::tempdir().unwrap();
        write_bundle(
            tmp.path(),
            MANIFEST_2X3,
            &[
                r#"{"id":"t0","predicted_label":0,"true_label":0,"states":[[0.1,0.2,0.3]]}"#,
                r#"{"id":"t1","predicted_label":1,"true_label":1,"states":[[NaN,0,1]]}"#,
            ],
        );
        let err = load_trace_bundle(tmp.path()).unwrap_err();
        assert!(matches!(err, Error::NonFinite { .. }), "{err}");
        assert!(err.to_string().contains("non-finite value"));
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let tmp = tempfile::tempdir().unwrap();
        write_bundle(
            tmp.path(),
            MANIFEST_2X3,
            &[
                r#"{"id":"t0","predicted_label":0,"true_label":0,"states":[[0.1,0.2,0.3]]}"#,
                r#"{"id":"t1","predicted_label":1,"states":[[0,0,1]"#,
            ],
        );
        match load_trace_bundle(tmp.path()).unwrap_err() {
            Error::Malformed { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn dimension_mismatch_and_unknown_label() {
        let tmp = tempfile::tempdir().unwrap();
        write_bundle(
            tmp.path(),
            MANIFEST_2X3,
            &[
                r#"{"id":"t0","predicted_label":0,"true_label":0,"states":[[0.1,0.2]]}"#,
                r#"{"id":"t1","predicted_label":1,"true_label":1,"states":[[0,0,1]]}"#,
            ],
        );
        assert!(matches!(
            load_trace_bundle(tmp.path()).unwrap_err(),
            Error::DimensionMismatch { expected: 3, actual: 2, .. }
        ));

        write_bundle(
            tmp.path(),
            MANIFEST_2X3,
            &[
                r#"{"id":"t0","predicted_label":5,"true_label":0,"states":[[0.1,0.2,0.3]]}"#,
                r#"{"id":"t1","predicted_label":1,"true_label":1,"states":[[0,0,1]]}"#,
            ],
        );
        assert!(matches!(
            load_trace_bundle(tmp.path()).unwrap_err(),
            Error::UnknownLabel { label: 5, .. }
        ));
    }

    #[test]
    fn id_containing_nan_is_not_non_finite() {
        assert!(!contains_non_finite_token(r#"{"id":"NaN","states":[[1]]}"#));
        assert!(contains_non_finite_token(r#"{"id":"x","states":[[-Infinity]]}"#));
    }

    #[test]
    fn empty_set_writes_zero_count() {
        let tmp = tempfile::tempdir().unwrap();
        let dir = tmp.path().join("empty");
        let set = TraceSet::with_label_count(vec![], 3, 4, Role::Test).unwrap();
        save_trace_bundle(&set, &dir).unwrap();
        let manifest = read_manifest(&dir).unwrap();
        assert_eq!(manifest.trace_count, 0);
        assert_eq!(manifest.max_timesteps, 0);
        assert_eq!(load_trace_bundle(&dir).unwrap(), set);
    }

    #[test]
    fn null_labels_survive_round_trip() {
        let tmp = tempfile::tempdir().unwrap();
        let set = TraceSet::with_label_count(
            vec![
                trace("a", vec![vec![0.1, 1e-300]], None, Some(1)),
                trace("b", vec![vec![0.5, -2.0], vec![3.0, 4.0]], Some(0), None),
                trace("c", vec![vec![1.0 / 3.0, 2.0 / 3.0]], None, None),
            ],
            2,
            2,
            Role::Training,
        )
        .unwrap();
        save_trace_bundle(&set, tmp.path()).unwrap();
        assert_eq!(load_trace_bundle(tmp.path()).unwrap(), set);
    }

    #[test]
    fn outcomes_follow_label_agreement() {
        let set = TraceSet::with_label_count(
            vec![
                trace("same", vec![vec![0.0]], Some(3), Some(3)),
                trace("diff", vec![vec![0.0]], Some(3), Some(7)),
            ],
            8,
            1,
            Role::Test,
        )
        .unwrap();
        let out = derive_outcomes(&set).unwrap();
        assert_eq!(out.len(), 2);
        assert!(!out[0].error);
        assert!(out[1].error);
        assert_eq!(error_rate(&out), 0.5);
    }

    #[test]
    fn outcomes_reject_null_label() {
        let set = TraceSet::with_label_count(
            vec![trace("orphan", vec![vec![0.0]], Some(1), None)],
            2,
            1,
            Role::Test,
        )
        .unwrap();
        let err = derive_outcomes(&set).unwrap_err();
        assert!(err.to_string().contains("orphan"));
    }

    #[test]
    fn all_correct_set_has_zero_error_rate() {
        let traces = (0..5)
            .map(|i| trace(&format!("t{i}"), vec![vec![i as f64]], Some(i % 2), Some(i % 2)))
            .collect();
        let set = TraceSet::with_label_count(traces, 2, 1, Role::Test).unwrap();
        let out = derive_outcomes(&set).unwrap();
        assert!(out.iter().all(|o| !o.error));
        assert_eq!(error_rate(&out), 0.0);
    }

    #[test]
    fn rejects_single_label_and_empty_trace() {
        assert!(TraceSet::with_label_count(vec![], 1, 2, Role::Test).is_err());
        let empty = Trace::new("e", vec![], Some(0), Some(0));
        assert!(TraceSet::with_label_count(vec![empty], 2, 2, Role::Test).is_err());
    }
}
