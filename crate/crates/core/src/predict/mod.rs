//! Per-input error prediction from state machine traces.

mod features;
mod tree;

pub use features::{extract_all, extract_features, FeatureRow, FEATURE_COUNT, FEATURE_NAMES};
pub use tree::{
    entropy, explain_prediction, predict_error, train_tree, DecisionTree, Direction, Node, Rule,
    Split, TreeParams,
};
