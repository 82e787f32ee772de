//! State machine extraction.
//!
//! A [`Discretizer`] partitions the (optionally projected) hidden-state space
//! into basic states: k-means clusters or occupied grid cells. [`build_sm`]
//! runs the training traces through it and records, per basic state, the
//! histogram of predicted labels at final timesteps, visit counts and
//! transition counts.
//!
//! Mapping unseen traces may create dynamic (out-of-boundary) states. For
//! k-means, a vector outside every state's acceptance radius opens a new
//! state centered on itself whose radius is that of the nearest basic
//! state. For grids, every unoccupied cell visited becomes a new state.
//! Dynamic states live in a [`DynamicRegistry`] whose ids follow the basic
//! ids, in creation order.

pub mod grid;
pub mod kmeans;

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::reduction::Projection;
use crate::trace::{Role, Trace, TraceSet};

pub use grid::{fit_grid, GridGeometry, DEFAULT_CELLS_PER_DIM};
pub use kmeans::{fit_kmeans, KMeansFit, KMeansGeometry, KMeansParams};

/// Identifier of a state; basic states come first, dynamic ones after.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StateId(pub usize);

impl fmt::Display for StateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "S{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Geometry {
    Kmeans(KMeansGeometry),
    Grid(GridGeometry),
}

/// Partition of the state space into basic states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Discretizer {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub projection: Option<Projection>,
    pub geometry: Geometry,
}

impl Discretizer {
    pub fn kmeans(geometry: KMeansGeometry) -> Self {
        Discretizer {
            projection: None,
            geometry: Geometry::Kmeans(geometry),
        }
    }

    pub fn grid(geometry: GridGeometry) -> Self {
        Discretizer {
            projection: None,
            geometry: Geometry::Grid(geometry),
        }
    }

    pub fn with_projection(mut self, projection: Projection) -> Self {
        self.projection = Some(projection);
        self
    }

    pub fn basic_count(&self) -> usize {
        match &self.geometry {
            Geometry::Kmeans(g) => g.k(),
            Geometry::Grid(g) => g.state_count(),
        }
    }

    /// Dimension of raw (unprojected) input vectors.
    pub fn input_dim(&self) -> usize {
        match &self.projection {
            Some(p) => p.input_dim(),
            None => self.space_dim(),
        }
    }

    /// Dimension of the space the geometry lives in.
    pub fn space_dim(&self) -> usize {
        match &self.geometry {
            Geometry::Kmeans(g) => g.dim(),
            Geometry::Grid(g) => g.dim(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match &self.geometry {
            Geometry::Kmeans(g) => g.validate()?,
            Geometry::Grid(g) => g.validate()?,
        }
        if let Some(p) = &self.projection {
            p.validate()?;
            if p.output_dim() != self.space_dim() {
                return Err(Error::DimensionMismatch {
                    context: "projection output vs discretizer space".into(),
                    expected: self.space_dim(),
                    actual: p.output_dim(),
                });
            }
        }
        Ok(())
    }

    /// Apply the projection if any, checking the input dimension.
    pub fn to_space(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                context: "state vector vs state machine".into(),
                expected: self.input_dim(),
                actual: v.len(),
            });
        }
        match &self.projection {
            Some(p) => p.project(v),
            None => Ok(v.to_vec()),
        }
    }

    /// Basic state of a training point: nearest centroid, or its grid cell.
    fn training_state(&self, x: &[f64]) -> Option<usize> {
        match &self.geometry {
            Geometry::Kmeans(g) => Some(g.nearest(x).0),
            Geometry::Grid(g) => g.state_of_cell(&g.cell_of(x)),
        }
    }

    /// Basic state containing `x`, with its distance for k-means.
    fn containing_state(&self, x: &[f64]) -> Lookup {
        match &self.geometry {
            Geometry::Kmeans(g) => {
                let mut best: Option<(usize, f64)> = None;
                for (i, c) in g.centroids.iter().enumerate() {
                    let d = kmeans::distance(c, x);
                    if d <= g.acceptance_radius(i) && best.is_none_or(|(_, bd)| d < bd) {
                        best = Some((i, d));
                    }
                }
                match best {
                    Some((i, d)) => Lookup::Basic(i, d),
                    None => {
                        let (nearest, _) = g.nearest(x);
                        Lookup::Outside {
                            radius: g.radii[nearest],
                        }
                    }
                }
            }
            Geometry::Grid(g) => {
                let cell = g.cell_of(x);
                match g.state_of_cell(&cell) {
                    Some(i) => Lookup::Basic(i, 0.0),
                    None => Lookup::OutsideCell(cell),
                }
            }
        }
    }
}

enum Lookup {
    Basic(usize, f64),
    Outside { radius: f64 },
    OutsideCell(grid::Cell),
}

/// A state created while mapping unseen data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DynamicState {
    Ball { center: Vec<f64>, radius: f64 },
    Cell { cell: Vec<i64> },
}

/// Out-of-boundary states, in creation order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DynamicRegistry {
    states: Vec<DynamicState>,
    #[serde(skip)]
    cells: HashMap<Vec<i64>, usize>,
}

impl DynamicRegistry {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn states(&self) -> &[DynamicState] {
        &self.states
    }

    fn push(&mut self, state: DynamicState) -> usize {
        if let DynamicState::Cell { cell } = &state {
            self.cells.insert(cell.clone(), self.states.len());
        }
        self.states.push(state);
        self.states.len() - 1
    }

    fn find_ball(&self, x: &[f64]) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        for (i, s) in self.states.iter().enumerate() {
            if let DynamicState::Ball { center, radius } = s {
                let d = kmeans::distance(center, x);
                if d <= *radius && best.is_none_or(|(_, bd)| d < bd) {
                    best = Some((i, d));
                }
            }
        }
        best
    }

    fn find_cell(&self, cell: &[i64]) -> Option<usize> {
        if self.cells.len() != self.states.len() {
            // Rebuild lazily after deserialization.
            return self.states.iter().position(
                |s| matches!(s, DynamicState::Cell { cell: c } if c.as_slice() == cell),
            );
        }
        self.cells.get(cell).copied()
    }

    fn extend(&mut self, other: Vec<DynamicState>) {
        for s in other {
            self.push(s);
        }
    }
}

/// A trace expressed as a walk over state machine states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbstractTrace {
    pub trace_id: String,
    pub state_ids: Vec<StateId>,
    /// True where the step landed in a dynamic state.
    pub is_new: Vec<bool>,
    pub final_state: StateId,
    pub predicted_label: Option<usize>,
    pub true_label: Option<usize>,
}

impl AbstractTrace {
    /// Consecutive state pairs, self-loops included.
    pub fn transitions(&self) -> impl Iterator<Item = (StateId, StateId)> + '_ {
        self.state_ids.windows(2).map(|w| (w[0], w[1]))
    }

    pub fn is_error(&self) -> Option<bool> {
        Some(self.predicted_label? != self.true_label?)
    }
}

/// Provenance stored with every state machine.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SmMetadata {
    pub method: String,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub k: Option<usize>,
    #[serde(default)]
    pub cells_per_dim: Option<usize>,
    #[serde(default)]
    pub training_traces: usize,
}

/// The extracted state machine.
#[derive(Debug, Clone, PartialEq)]
pub struct StateMachine {
    discretizer: Discretizer,
    labels: Vec<String>,
    hist: Vec<Vec<u64>>,
    visits: Vec<u64>,
    transitions: BTreeMap<(StateId, StateId), u64>,
    outgoing: Vec<u64>,
    dynamic: DynamicRegistry,
    pub metadata: SmMetadata,
}

/// Build the state machine from training traces.
pub fn build_sm(discretizer: Discretizer, training: &TraceSet) -> Result<StateMachine> {
    if training.role() != Role::Training {
        return Err(Error::invalid("build_sm needs a trace set with the training role"));
    }
    discretizer.validate()?;
    if training.dimension() != discretizer.input_dim() {
        return Err(Error::DimensionMismatch {
            context: "training set vs discretizer".into(),
            expected: discretizer.input_dim(),
            actual: training.dimension(),
        });
    }
    let walks: Vec<Vec<usize>> = training
        .traces()
        .par_iter()
        .map(|t| {
            t.states
                .iter()
                .enumerate()
                .map(|(step, v)| {
                    let x = discretizer.to_space(v)?;
                    discretizer.training_state(&x).ok_or_else(|| {
                        Error::invalid(format!(
                            "trace `{}` step {step} falls outside the discretizer's occupied cells",
                            t.id
                        ))
                    })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;

    let n = discretizer.basic_count();
    let l = training.label_count();
    let mut sm = StateMachine {
        discretizer,
        labels: training.labels().to_vec(),
        hist: vec![vec![0; l]; n],
        visits: vec![0; n],
        transitions: BTreeMap::new(),
        outgoing: vec![0; n],
        dynamic: DynamicRegistry::default(),
        metadata: SmMetadata {
            training_traces: training.len(),
            ..SmMetadata::default()
        },
    };
    for (trace, walk) in training.traces().iter().zip(&walks) {
        let label = trace.predicted_label.ok_or_else(|| Error::NullLabel {
            trace_id: trace.id.clone(),
            which: "predicted",
        })?;
        for &s in walk {
            sm.visits[s] += 1;
        }
        for w in walk.windows(2) {
            *sm.transitions.entry((StateId(w[0]), StateId(w[1]))).or_insert(0) += 1;
            sm.outgoing[w[0]] += 1;
        }
        let last = *walk.last().expect("validated traces are non-empty");
        sm.hist[last][label] += 1;
    }
    Ok(sm)
}

impl StateMachine {
    pub fn discretizer(&self) -> &Discretizer {
        &self.discretizer
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label_count(&self) -> usize {
        self.labels.len()
    }

    /// Number of basic states (|SMS|).
    pub fn basic_count(&self) -> usize {
        self.hist.len()
    }

    pub fn is_basic(&self, s: StateId) -> bool {
        s.0 < self.basic_count()
    }

    /// Per basic state, counts of training final states by predicted label.
    pub fn histograms(&self) -> &[Vec<u64>] {
        &self.hist
    }

    /// Training final-state count for a label in a state; 0 for dynamic states.
    pub fn final_count(&self, s: StateId, label: usize) -> u64 {
        self.hist
            .get(s.0)
            .and_then(|h| h.get(label))
            .copied()
            .unwrap_or(0)
    }

    pub fn final_total(&self, s: StateId) -> u64 {
        self.hist.get(s.0).map_or(0, |h| h.iter().sum())
    }

    pub fn visits(&self) -> &[u64] {
        &self.visits
    }

    pub fn transitions(&self) -> &BTreeMap<(StateId, StateId), u64> {
        &self.transitions
    }

    pub fn transition_count(&self, from: StateId, to: StateId) -> u64 {
        self.transitions.get(&(from, to)).copied().unwrap_or(0)
    }

    pub fn outgoing(&self, s: StateId) -> u64 {
        self.outgoing.get(s.0).copied().unwrap_or(0)
    }

    /// Training-time final states (SMFS).
    pub fn final_states(&self) -> Vec<StateId> {
        (0..self.basic_count())
            .map(StateId)
            .filter(|&s| self.final_total(s) > 0)
            .collect()
    }

    pub fn total_finals(&self) -> u64 {
        self.hist.iter().flatten().sum()
    }

    pub fn dynamic(&self) -> &DynamicRegistry {
        &self.dynamic
    }

    pub fn reset_dynamic(&mut self) {
        self.dynamic = DynamicRegistry::default();
    }

    /// Share of outgoing training transitions from `from` that go to `to`.
    pub fn transition_prob(&self, from: StateId, to: StateId) -> f64 {
        let out = self.outgoing(from);
        if out == 0 {
            return 0.0;
        }
        self.transition_count(from, to) as f64 / out as f64
    }

    /// Map one trace. With `mutate`, dynamic states it creates are kept in
    /// the machine's registry and visible to later traces.
    pub fn map_trace(&mut self, trace: &Trace, mutate: bool) -> Result<AbstractTrace> {
        let spaced = self.space_trace(trace)?;
        let lookups = spaced.iter().map(|x| self.discretizer.containing_state(x)).collect();
        let (at, created) = self.resolve(trace, &spaced, lookups, &self.dynamic)?;
        if mutate {
            self.dynamic.extend(created);
        }
        Ok(at)
    }

    /// Map a whole suite in order against a private registry that starts
    /// from this machine's registry and is discarded afterwards. Returns the
    /// abstract traces and the number of dynamic states created.
    pub fn map_suite(&self, traces: &[Trace]) -> Result<(Vec<AbstractTrace>, usize)> {
        // Basic-state lookup is order-independent and runs in parallel;
        // dynamic states are resolved sequentially in file order.
        let prepared: Vec<(Vec<Vec<f64>>, Vec<Lookup>)> = traces
            .par_iter()
            .map(|t| {
                let spaced = self.space_trace(t)?;
                let lookups = spaced
                    .iter()
                    .map(|x| self.discretizer.containing_state(x))
                    .collect();
                Ok((spaced, lookups))
            })
            .collect::<Result<_>>()?;
        let mut registry = self.dynamic.clone();
        let start = registry.len();
        let mut out = Vec::with_capacity(traces.len());
        for (trace, (spaced, lookups)) in traces.iter().zip(prepared) {
            let (at, created) = self.resolve(trace, &spaced, lookups, &registry)?;
            registry.extend(created);
            out.push(at);
        }
        Ok((out, registry.len() - start))
    }

    fn space_trace(&self, trace: &Trace) -> Result<Vec<Vec<f64>>> {
        if trace.states.is_empty() {
            return Err(Error::invalid(format!("trace `{}` has no states", trace.id)));
        }
        trace
            .states
            .iter()
            .map(|v| self.discretizer.to_space(v))
            .collect()
    }

    fn resolve(
        &self,
        trace: &Trace,
        spaced: &[Vec<f64>],
        lookups: Vec<Lookup>,
        registry: &DynamicRegistry,
    ) -> Result<(AbstractTrace, Vec<DynamicState>)> {
        let n = self.basic_count();
        let offset = n + registry.len();
        let mut local = DynamicRegistry::default();
        let mut state_ids = Vec::with_capacity(spaced.len());
        let mut is_new = Vec::with_capacity(spaced.len());
        for (x, lookup) in spaced.iter().zip(lookups) {
            let id = match lookup {
                Lookup::Basic(i, d) => {
                    // A dynamic ball strictly closer than the basic centroid wins.
                    let dynamic = registry
                        .find_ball(x)
                        .map(|(j, dd)| (n + j, dd))
                        .into_iter()
                        .chain(local.find_ball(x).map(|(j, dd)| (offset + j, dd)))
                        .filter(|&(_, dd)| dd < d)
                        .min_by(|a, b| a.1.total_cmp(&b.1));
                    dynamic.map_or(i, |(j, _)| j)
                }
                Lookup::Outside { radius } => {
                    let found = registry
                        .find_ball(x)
                        .map(|(j, dd)| (n + j, dd))
                        .into_iter()
                        .chain(local.find_ball(x).map(|(j, dd)| (offset + j, dd)))
                        .min_by(|a, b| a.1.total_cmp(&b.1));
                    match found {
                        Some((j, _)) => j,
                        None => {
                            offset
                                + local.push(DynamicState::Ball {
                                    center: x.clone(),
                                    radius,
                                })
                        }
                    }
                }
                Lookup::OutsideCell(cell) => match registry.find_cell(&cell) {
                    Some(j) => n + j,
                    None => match local.find_cell(&cell) {
                        Some(j) => offset + j,
                        None => offset + local.push(DynamicState::Cell { cell }),
                    },
                },
            };
            is_new.push(id >= n);
            state_ids.push(StateId(id));
        }
        let final_state = *state_ids.last().expect("non-empty trace");
        Ok((
            AbstractTrace {
                trace_id: trace.id.clone(),
                state_ids,
                is_new,
                final_state,
                predicted_label: trace.predicted_label,
                true_label: trace.true_label,
            },
            local.states,
        ))
    }
}

/// On-disk form of a state machine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct SmArtifact {
    version: u32,
    metadata: SmMetadata,
    labels: Vec<String>,
    discretizer: Discretizer,
    /// `[state, label, count]`, non-zero entries only.
    histograms: Vec<(usize, usize, u64)>,
    visits: Vec<u64>,
    /// `[from, to, count]`.
    transitions: Vec<(usize, usize, u64)>,
    #[serde(default)]
    dynamic_states: DynamicRegistry,
}

impl StateMachine {
    pub fn to_json(&self) -> Result<String> {
        let artifact = SmArtifact {
            version: 1,
            metadata: self.metadata.clone(),
            labels: self.labels.clone(),
            discretizer: self.discretizer.clone(),
            histograms: self
                .hist
                .iter()
                .enumerate()
                .flat_map(|(s, h)| {
                    h.iter()
                        .enumerate()
                        .filter(|(_, &c)| c > 0)
                        .map(move |(l, &c)| (s, l, c))
                })
                .collect(),
            visits: self.visits.clone(),
            transitions: self
                .transitions
                .iter()
                .map(|(&(a, b), &c)| (a.0, b.0, c))
                .collect(),
            dynamic_states: self.dynamic.clone(),
        };
        serde_json::to_string_pretty(&artifact).map_err(|e| Error::Json {
            context: "encoding state machine".into(),
            source: e,
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let a: SmArtifact = serde_json::from_str(text).map_err(|e| Error::Json {
            context: "parsing state machine".into(),
            source: e,
        })?;
        if a.version != 1 {
            return Err(Error::invalid(format!("unsupported state machine version {}", a.version)));
        }
        a.discretizer.validate()?;
        let n = a.discretizer.basic_count();
        let l = a.labels.len();
        if l < 2 {
            return Err(Error::invalid("state machine needs at least 2 labels"));
        }
        if a.visits.len() != n {
            return Err(Error::invalid("visit counts do not match the number of states"));
        }
        let mut hist = vec![vec![0; l]; n];
        for (s, lab, c) in a.histograms {
            if s >= n || lab >= l {
                return Err(Error::invalid(format!("histogram entry ({s}, {lab}) out of range")));
            }
            hist[s][lab] += c;
        }
        let mut transitions = BTreeMap::new();
        let mut outgoing = vec![0; n];
        for (from, to, c) in a.transitions {
            if from >= n || to >= n {
                return Err(Error::invalid(format!("transition ({from}, {to}) out of range")));
            }
            *transitions.entry((StateId(from), StateId(to))).or_insert(0) += c;
            outgoing[from] += c;
        }
        let mut dynamic = DynamicRegistry::default();
        dynamic.extend(a.dynamic_states.states);
        Ok(StateMachine {
            discretizer: a.discretizer,
            labels: a.labels,
            hist,
            visits: a.visits,
            transitions,
            outgoing,
            dynamic,
            metadata: a.metadata,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::fsutil::write_atomic(path, self.to_json()?.as_bytes())
    }
}

/// All hidden states of a set, flattened in trace order.
pub fn all_states(set: &TraceSet) -> Vec<Vec<f64>> {
    set.traces()
        .iter()
        .flat_map(|t| t.states.iter().map(|s| s.0.clone()))
        .collect()
}

/// Final states and their predicted labels (traces with a null prediction skipped).
pub fn final_states_with_labels(set: &TraceSet) -> (Vec<Vec<f64>>, Vec<usize>) {
    set.traces()
        .iter()
        .filter_map(|t| Some((t.final_state()?.0.clone(), t.predicted_label?)))
        .unzip()
}

/// How to discretize when extracting from a training set.
#[derive(Debug, Clone, PartialEq)]
pub enum Method {
    Kmeans(KMeansParams),
    Grid {
        cells_per_dim: usize,
        projection: ProjectionSpec,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProjectionSpec {
    None,
    Pca(usize),
    /// Fitted on final states with their predicted labels, applied to all.
    Lda(usize),
}

/// Fit a discretizer on a training set and build the machine in one go.
pub fn extract(training: &TraceSet, method: &Method) -> Result<StateMachine> {
    let points = all_states(training);
    let (disc, metadata) = match method {
        Method::Kmeans(params) => {
            let fit = fit_kmeans(&points, params)?;
            (
                Discretizer::kmeans(fit.geometry),
                SmMetadata {
                    method: "kmeans".into(),
                    seed: Some(params.seed),
                    k: Some(params.k),
                    ..SmMetadata::default()
                },
            )
        }
        Method::Grid {
            cells_per_dim,
            projection,
        } => {
            let proj = match *projection {
                ProjectionSpec::None => None,
                ProjectionSpec::Pca(k) => Some(crate::reduction::fit_pca(&points, k)?),
                ProjectionSpec::Lda(k) => {
                    let (finals, labels) = final_states_with_labels(training);
                    Some(crate::reduction::fit_lda(&finals, &labels, k)?)
                }
            };
            let spaced: Vec<Vec<f64>> = match &proj {
                Some(p) => points.iter().map(|v| p.project(v)).collect::<Result<_>>()?,
                None => points,
            };
            let geometry = fit_grid(&spaced, *cells_per_dim)?;
            let method_name = match projection {
                ProjectionSpec::None => "grid",
                ProjectionSpec::Pca(_) => "grid+pca",
                ProjectionSpec::Lda(_) => "grid+lda",
            };
            let mut d = Discretizer::grid(geometry);
            d.projection = proj;
            (
                d,
                SmMetadata {
                    method: method_name.into(),
                    cells_per_dim: Some(*cells_per_dim),
                    ..SmMetadata::default()
                },
            )
        }
    };
    let mut sm = build_sm(disc, training)?;
    sm.metadata = SmMetadata {
        training_traces: training.len(),
        ..metadata
    };
    Ok(sm)
}
