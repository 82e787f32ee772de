//! Hypothesis testing and ranking quality.

mod ks;
mod roc;
mod significance;

pub use ks::{kolmogorov_q, ks_statistic, ks_two_sample, KsResult};
pub use roc::{roc_auc, RocCurve};
pub use significance::{
    accuracy, criterion_significance, map_suites, significance_matrix, SignificanceRow, ALPHA,
};
