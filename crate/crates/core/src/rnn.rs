//! Forward inference for S-RNN, LSTM and GRU cells from exported weights.
//!
//! Only the hidden vector `h` is recorded in traces. The LSTM cell vector `c`
//! is carried between steps but never stored. Stacked layers are supported
//! as a simple chain; the recorded state is the concatenation of every
//! layer's `h`, and the readout is applied to the last layer's `h`.
//!
//! Weight file layout (single layer):
//!
//! ```text
//! {"cell":"lstm","input_dim":..,"hidden_dim":..,
//!  "gates":{"f":{"W":[[..]],"U":[[..]],"b":[..]},"i":..,"o":..,"c":..},
//!  "readout":{"W":[[..]],"b":[..]},"labels":[..]}
//! ```
//!
//! A stacked model replaces `cell`/`input_dim`/`hidden_dim`/`gates` with a
//! `layers` array of objects holding exactly those four keys.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_finite, Error, Result};
use crate::trace::{StateVector, Trace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellKind {
    Srnn,
    Lstm,
    Gru,
}

impl CellKind {
    /// Gate names expected in the weight file.
    pub fn gate_names(self) -> &'static [&'static str] {
        match self {
            CellKind::Srnn => &["h"],
            CellKind::Lstm => &["f", "i", "o", "c"],
            CellKind::Gru => &["z", "r", "u"],
        }
    }
}

impl fmt::Display for CellKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            CellKind::Srnn => "srnn",
            CellKind::Lstm => "lstm",
            CellKind::Gru => "gru",
        };
        f.write_str(name)
    }
}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != cols) {
            return Err(Error::DimensionMismatch {
                context: "ragged matrix row".into(),
                expected: cols,
                actual: bad.len(),
            });
        }
        Ok(Matrix {
            rows: rows.len(),
            cols,
            data: rows.into_iter().flatten().collect(),
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.cols.max(1)).map(<[f64]>::to_vec).collect()
    }

    /// `out += self · x`
    fn mul_add(&self, x: &[f64], out: &mut [f64]) {
        for (r, o) in out.iter_mut().enumerate() {
            let row = &self.data[r * self.cols..(r + 1) * self.cols];
            *o += row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        }
    }
}

impl Serialize for Matrix {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_rows().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Matrix {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        Matrix::from_rows(rows).map_err(serde::de::Error::custom)
    }
}

/// `W`, `U` and `b` of one gate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gate {
    #[serde(rename = "W")]
    pub w: Matrix,
    #[serde(rename = "U")]
    pub u: Matrix,
    pub b: Vec<f64>,
}

impl Gate {
    pub fn zeros(input_dim: usize, hidden_dim: usize) -> Self {
        Gate {
            w: Matrix::zeros(hidden_dim, input_dim),
            u: Matrix::zeros(hidden_dim, hidden_dim),
            b: vec![0.0; hidden_dim],
        }
    }

    /// `W x + U h + b`
    fn pre_activation(&self, x: &[f64], h: &[f64]) -> Vec<f64> {
        let mut out = self.b.clone();
        self.w.mul_add(x, &mut out);
        self.u.mul_add(h, &mut out);
        out
    }

    fn check(&self, name: &str, input_dim: usize, hidden_dim: usize) -> Result<()> {
        let shape = |what: &str, expected: usize, actual: usize| {
            if expected == actual {
                Ok(())
            } else {
                Err(Error::DimensionMismatch {
                    context: format!("gate `{name}` {what}"),
                    expected,
                    actual,
                })
            }
        };
        shape("W rows", hidden_dim, self.w.rows())?;
        shape("W cols", input_dim, self.w.cols())?;
        shape("U rows", hidden_dim, self.u.rows())?;
        shape("U cols", hidden_dim, self.u.cols())?;
        shape("b length", hidden_dim, self.b.len())?;
        check_finite(&self.w.data, || format!("gate `{name}` W"))?;
        check_finite(&self.u.data, || format!("gate `{name}` U"))?;
        check_finite(&self.b, || format!("gate `{name}` b"))
    }
}

/// Weights of one recurrent cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellWeights {
    pub cell: CellKind,
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub gates: BTreeMap<String, Gate>,
}

impl CellWeights {
    pub fn validate(&self) -> Result<()> {
        let expected = self.cell.gate_names();
        for name in self.gates.keys() {
            if !expected.contains(&name.as_str()) {
                return Err(Error::invalid(format!(
                    "unexpected gate `{name}` for a {} cell",
                    self.cell
                )));
            }
        }
        for name in expected {
            let gate = self.gates.get(*name).ok_or_else(|| {
                Error::invalid(format!("missing gate `{name}` for a {} cell", self.cell))
            })?;
            gate.check(name, self.input_dim, self.hidden_dim)?;
        }
        Ok(())
    }

    fn gate(&self, name: &str) -> &Gate {
        &self.gates[name]
    }
}

/// Affine readout; the predicted label is the arg-max of its output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Readout {
    #[serde(rename = "W")]
    pub w: Matrix,
    pub b: Vec<f64>,
}

impl Readout {
    /// Index of the largest logit, ties resolved towards the lowest index.
    pub fn predict(&self, h: &[f64]) -> usize {
        let mut logits = self.b.clone();
        self.w.mul_add(h, &mut logits);
        let mut best = 0;
        for (i, &v) in logits.iter().enumerate() {
            if v > logits[best] {
                best = i;
            }
        }
        best
    }
}

/// A chain of cells plus readout.
#[derive(Debug, Clone, PartialEq)]
pub struct RnnWeights {
    pub layers: Vec<CellWeights>,
    pub readout: Readout,
    pub labels: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct WeightFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    cell: Option<CellKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    input_dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    hidden_dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    gates: Option<BTreeMap<String, Gate>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    layers: Option<Vec<CellWeights>>,
    readout: Readout,
    labels: Vec<String>,
}

impl RnnWeights {
    pub fn single(cell: CellWeights, readout: Readout, labels: Vec<String>) -> Result<Self> {
        let w = RnnWeights {
            layers: vec![cell],
            readout,
            labels,
        };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        let first = self
            .layers
            .first()
            .ok_or_else(|| Error::invalid("a model needs at least one layer"))?;
        first.validate()?;
        for pair in self.layers.windows(2) {
            pair[1].validate()?;
            if pair[1].input_dim != pair[0].hidden_dim {
                return Err(Error::DimensionMismatch {
                    context: "stacked layer input".into(),
                    expected: pair[0].hidden_dim,
                    actual: pair[1].input_dim,
                });
            }
        }
        let last = self.layers.last().expect("non-empty");
        if self.readout.w.cols() != last.hidden_dim {
            return Err(Error::DimensionMismatch {
                context: "readout W cols".into(),
                expected: last.hidden_dim,
                actual: self.readout.w.cols(),
            });
        }
        if self.readout.w.rows() != self.labels.len() || self.readout.b.len() != self.labels.len()
        {
            return Err(Error::DimensionMismatch {
                context: "readout rows vs labels".into(),
                expected: self.labels.len(),
                actual: self.readout.w.rows(),
            });
        }
        check_finite(&self.readout.w.data, || "readout W".into())?;
        check_finite(&self.readout.b, || "readout b".into())
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim
    }

    /// Dimension of the recorded state: the sum of all hidden sizes.
    pub fn state_dim(&self) -> usize {
        self.layers.iter().map(|l| l.hidden_dim).sum()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: WeightFile = serde_json::from_str(text).map_err(|e| Error::Json {
            context: "parsing weight file".into(),
            source: e,
        })?;
        let layers = match (file.layers, file.cell, file.input_dim, file.hidden_dim, file.gates) {
            (Some(layers), None, None, None, None) => layers,
            (None, Some(cell), Some(input_dim), Some(hidden_dim), Some(gates)) => {
                vec![CellWeights {
                    cell,
                    input_dim,
                    hidden_dim,
                    gates,
                }]
            }
            _ => {
                return Err(Error::invalid(
                    "weight file needs either `layers` or `cell`+`input_dim`+`hidden_dim`+`gates`",
                ))
            }
        };
        let w = RnnWeights {
            layers,
            readout: file.readout,
            labels: file.labels,
        };
        w.validate()?;
        Ok(w)
    }

    pub fn to_json(&self) -> Result<String> {
        let file = if let [only] = self.layers.as_slice() {
            WeightFile {
                cell: Some(only.cell),
                input_dim: Some(only.input_dim),
                hidden_dim: Some(only.hidden_dim),
                gates: Some(only.gates.clone()),
                layers: None,
                readout: self.readout.clone(),
                labels: self.labels.clone(),
            }
        } else {
            WeightFile {
                cell: None,
                input_dim: None,
                hidden_dim: None,
                gates: None,
                layers: Some(self.layers.clone()),
                readout: self.readout.clone(),
                labels: self.labels.clone(),
            }
        };
        serde_json::to_string_pretty(&file).map_err(|e| Error::Json {
            context: "encoding weight file".into(),
            source: e,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

/// Recurrent state of one cell. `c` is present for LSTM cells only.
#[derive(Debug, Clone, PartialEq)]
pub struct CellState {
    pub h: StateVector,
    pub c: Option<StateVector>,
}

impl CellState {
    pub fn initial(weights: &CellWeights) -> Self {
        CellState {
            h: StateVector::zeros(weights.hidden_dim),
            c: (weights.cell == CellKind::Lstm).then(|| StateVector::zeros(weights.hidden_dim)),
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// One time step of a cell.
pub fn step(weights: &CellWeights, state: &CellState, x: &[f64]) -> Result<CellState> {
    if x.len() != weights.input_dim {
        return Err(Error::DimensionMismatch {
            context: "cell input".into(),
            expected: weights.input_dim,
            actual: x.len(),
        });
    }
    if state.h.dim() != weights.hidden_dim {
        return Err(Error::DimensionMismatch {
            context: "cell hidden state".into(),
            expected: weights.hidden_dim,
            actual: state.h.dim(),
        });
    }
    check_finite(x, || "cell input".into())?;
    let h_prev = &state.h[..];
    let next = match weights.cell {
        CellKind::Srnn => {
            let h = weights.gate("h").pre_activation(x, h_prev);
            CellState {
                h: h.into_iter().map(f64::tanh).collect::<Vec<_>>().into(),
                c: None,
            }
        }
        CellKind::Lstm => {
            let c_prev = match &state.c {
                Some(c) if c.dim() == weights.hidden_dim => c,
                Some(c) => {
                    return Err(Error::DimensionMismatch {
                        context: "LSTM cell vector".into(),
                        expected: weights.hidden_dim,
                        actual: c.dim(),
                    })
                }
                None => return Err(Error::invalid("LSTM step needs a cell vector")),
            };
            let f = weights.gate("f").pre_activation(x, h_prev);
            let i = weights.gate("i").pre_activation(x, h_prev);
            let o = weights.gate("o").pre_activation(x, h_prev);
            let cand = weights.gate("c").pre_activation(x, h_prev);
            let mut c = Vec::with_capacity(weights.hidden_dim);
            let mut h = Vec::with_capacity(weights.hidden_dim);
            for k in 0..weights.hidden_dim {
                let ck = sigmoid(f[k]) * c_prev[k] + sigmoid(i[k]) * cand[k].tanh();
                h.push(sigmoid(o[k]) * ck.tanh());
                c.push(ck);
            }
            CellState {
                h: h.into(),
                c: Some(c.into()),
            }
        }
        CellKind::Gru => {
            let z: Vec<f64> = weights
                .gate("z")
                .pre_activation(x, h_prev)
                .into_iter()
                .map(sigmoid)
                .collect();
            let r: Vec<f64> = weights
                .gate("r")
                .pre_activation(x, h_prev)
                .into_iter()
                .map(sigmoid)
                .collect();
            let gated: Vec<f64> = r.iter().zip(h_prev).map(|(a, b)| a * b).collect();
            let u = weights.gate("u").pre_activation(x, &gated);
            let h: Vec<f64> = (0..weights.hidden_dim)
                .map(|k| z[k] * h_prev[k] + (1.0 - z[k]) * u[k].tanh())
                .collect();
            CellState {
                h: h.into(),
                c: None,
            }
        }
    };
    Ok(next)
}

/// Run the model over an input sequence, recording `h` after every step.
pub fn run(weights: &RnnWeights, id: impl Into<String>, inputs: &[StateVector]) -> Result<Trace> {
    if inputs.is_empty() {
        return Err(Error::invalid("an input sequence needs at least one step"));
    }
    let mut states: Vec<CellState> = weights.layers.iter().map(CellState::initial).collect();
    let mut recorded = Vec::with_capacity(inputs.len());
    for x in inputs {
        let mut layer_input: &[f64] = x;
        let mut next_states = Vec::with_capacity(states.len());
        for (layer, state) in weights.layers.iter().zip(&states) {
            next_states.push(step(layer, state, layer_input)?);
            layer_input = &next_states.last().expect("just pushed").h;
        }
        states = next_states;
        let concat: Vec<f64> = states.iter().flat_map(|s| s.h.iter().copied()).collect();
        recorded.push(StateVector(concat));
    }
    let last_h = &states.last().expect("at least one layer").h;
    let predicted = weights.readout.predict(last_h);
    Ok(Trace::new(id, recorded, Some(predicted), None))
}

/// One input sequence to be run through the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputSequence {
    pub id: String,
    pub inputs: Vec<StateVector>,
    #[serde(default)]
    pub true_label: Option<usize>,
}

/// Run many sequences in parallel; output order follows input order.
pub fn run_batch(weights: &RnnWeights, batch: &[InputSequence]) -> Result<Vec<Trace>> {
    batch
        .par_iter()
        .map(|seq| {
            let mut trace = run(weights, seq.id.clone(), &seq.inputs)?;
            trace.true_label = seq.true_label;
            Ok(trace)
        })
        .collect()
}
