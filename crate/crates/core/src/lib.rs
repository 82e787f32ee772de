//! State-machine abstraction of recurrent sequence classifiers.
//!
//! The crate turns per-timestep hidden-state traces of a recurrent model into a
//! discrete state machine, scores how well that machine reflects the model's
//! decisions, measures how thoroughly a test suite exercises it, checks the
//! statistical significance of those coverage measures, and trains a small
//! decision tree that predicts, per input, whether the model is likely wrong.
//!
//! Pipeline, module by module:
//!
//! - [`trace`]: trace bundles on disk and the in-memory data model.
//! - [`rnn`]: forward inference of S-RNN / LSTM / GRU cells from exported weights.
//! - [`reduction`]: PCA and LDA projections for the grid baselines.
//! - [`extract`]: K-Means and grid discretization, state machine construction,
//!   trace abstraction with out-of-boundary state creation.
//! - [`metrics`]: purity, richness, goodness and scale.
//! - [`coverage`]: final-state and label coverage criteria plus the state and
//!   transition criteria of the grid baseline.
//! - [`stats`]: two-sample Kolmogorov–Smirnov, ROC/AUC, criterion significance.
//! - [`predict`]: trace features and the error-predicting decision tree.
//! - [`synth`]: seeded generators with planted structure.
//! - [`sweep`]: choosing the number of clusters by goodness.

pub mod coverage;
pub mod error;
pub mod extract;
pub mod fsutil;
pub mod metrics;
pub mod predict;
pub mod reduction;
pub mod rnn;
pub mod stats;
pub mod sweep;
pub mod synth;
pub mod trace;

pub use error::{Error, Result};
