use serde::{Deserialize, Serialize};

use super::features::{FeatureRow, FEATURE_COUNT, FEATURE_NAMES};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    /// Cost-complexity pruning strength; 0 keeps the fully grown tree.
    pub ccp_alpha: f64,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams {
            max_depth: 8,
            min_samples_leaf: 5,
            ccp_alpha: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub feature: usize,
    pub threshold: f64,
    pub left: usize,
    pub right: usize,
    /// Information gain in bits at this node.
    pub gain: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub samples: usize,
    pub errors: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<Split>,
}

impl Node {
    pub fn probability(&self) -> f64 {
        self.errors as f64 / self.samples as f64
    }

    fn entropy(&self) -> f64 {
        entropy(self.errors, self.samples)
    }
}

/// Binary tree over the six trace features; node 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub nodes: Vec<Node>,
    pub params: TreeParams,
    pub feature_names: Vec<String>,
    pub feature_importances: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    /// value < threshold
    Below,
    /// value ≥ threshold
    AtOrAbove,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rule {
    pub feature: String,
    pub feature_index: usize,
    pub threshold: f64,
    pub direction: Direction,
}

impl Rule {
    pub fn holds(&self, values: &[f64; FEATURE_COUNT]) -> bool {
        let v = values[self.feature_index];
        match self.direction {
            Direction::Below => v < self.threshold,
            Direction::AtOrAbove => v >= self.threshold,
        }
    }
}

/// Binary entropy in bits of `pos` positives among `n`.
pub fn entropy(pos: usize, n: usize) -> f64 {
    if n == 0 || pos == 0 || pos == n {
        return 0.0;
    }
    let p = pos as f64 / n as f64;
    -(p * p.log2() + (1.0 - p) * (1.0 - p).log2())
}

/// Threshold strictly between `a < b` so that `a` goes left and `b` right.
fn midpoint(a: f64, b: f64) -> f64 {
    let m = a + (b - a) / 2.0;
    if m > a {
        m
    } else {
        b
    }
}

struct Builder<'a> {
    x: &'a [[f64; FEATURE_COUNT]],
    y: &'a [bool],
    params: TreeParams,
    nodes: Vec<Node>,
}

impl Builder<'_> {
    fn grow(&mut self, idx: &mut [usize], depth: usize) -> usize {
        let n = idx.len();
        let errors = idx.iter().filter(|&&i| self.y[i]).count();
        let id = self.nodes.len();
        self.nodes.push(Node {
            samples: n,
            errors,
            split: None,
        });
        if depth >= self.params.max_depth
            || n < 2 * self.params.min_samples_leaf
            || errors == 0
            || errors == n
        {
            return id;
        }
        let parent = entropy(errors, n);
        let mut best: Option<(f64, usize, f64)> = None;
        for f in 0..FEATURE_COUNT {
            idx.sort_by(|&a, &b| self.x[a][f].total_cmp(&self.x[b][f]).then(a.cmp(&b)));
            let mut left_err = 0;
            for k in 1..n {
                if self.y[idx[k - 1]] {
                    left_err += 1;
                }
                let (a, b) = (self.x[idx[k - 1]][f], self.x[idx[k]][f]);
                if a == b || k < self.params.min_samples_leaf || n - k < self.params.min_samples_leaf {
                    continue;
                }
                let wl = k as f64 / n as f64;
                let gain = parent
                    - wl * entropy(left_err, k)
                    - (1.0 - wl) * entropy(errors - left_err, n - k);
                if best.is_none_or(|(g, _, _)| gain > g) {
                    best = Some((gain, f, midpoint(a, b)));
                }
            }
        }
        let Some((gain, feature, threshold)) = best.filter(|&(g, _, _)| g > 1e-12) else {
            return id;
        };
        let (mut left, mut right): (Vec<usize>, Vec<usize>) =
            idx.iter().partition(|&&i| self.x[i][feature] < threshold);
        left.sort_unstable();
        right.sort_unstable();
        let l = self.grow(&mut left, depth + 1);
        let r = self.grow(&mut right, depth + 1);
        self.nodes[id].split = Some(Split {
            feature,
            threshold,
            left: l,
            right: r,
            gain,
        });
        id
    }
}

/// Greedy information-gain tree. Candidate thresholds are midpoints between
/// consecutive distinct values; ties in gain go to the lower feature index,
/// then the lower threshold. Deterministic.
pub fn train_tree(rows: &[FeatureRow], params: TreeParams) -> Result<DecisionTree> {
    if rows.len() < 2 {
        return Err(Error::invalid("tree training needs at least 2 rows"));
    }
    if params.min_samples_leaf == 0 {
        return Err(Error::invalid("min_samples_leaf must be at least 1"));
    }
    if !(params.ccp_alpha >= 0.0) {
        return Err(Error::invalid("ccp_alpha must be non-negative"));
    }
    let x: Vec<[f64; FEATURE_COUNT]> = rows.iter().map(FeatureRow::values).collect();
    for (row, v) in rows.iter().zip(&x) {
        crate::error::check_finite(v, || format!("features of `{}`", row.trace_id))?;
    }
    let y: Vec<bool> = rows
        .iter()
        .map(|r| {
            r.error.ok_or_else(|| Error::NullLabel {
                trace_id: r.trace_id.clone(),
                which: "error",
            })
        })
        .collect::<Result<_>>()?;
    let pos = y.iter().filter(|&&e| e).count();
    if pos == 0 || pos == y.len() {
        return Err(Error::invalid("tree training needs both error and correct rows"));
    }
    let mut b = Builder {
        x: &x,
        y: &y,
        params,
        nodes: Vec::new(),
    };
    let mut idx: Vec<usize> = (0..rows.len()).collect();
    b.grow(&mut idx, 0);
    let mut tree = DecisionTree {
        nodes: b.nodes,
        params,
        feature_names: FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
        feature_importances: Vec::new(),
    };
    tree.update_importances();
    if params.ccp_alpha > 0.0 {
        tree = tree.prune(params.ccp_alpha);
    }
    Ok(tree)
}

impl DecisionTree {
    pub fn root(&self) -> &Node {
        &self.nodes[0]
    }

    pub fn depth(&self) -> usize {
        fn go(t: &DecisionTree, i: usize) -> usize {
            match t.nodes[i].split {
                Some(s) => 1 + go(t, s.left).max(go(t, s.right)),
                None => 0,
            }
        }
        go(self, 0)
    }

    pub fn leaf_count(&self) -> usize {
        self.leaves_under(0)
    }

    fn leaves_under(&self, i: usize) -> usize {
        match self.nodes[i].split {
            Some(s) => self.leaves_under(s.left) + self.leaves_under(s.right),
            None => 1,
        }
    }

    fn update_importances(&mut self) {
        let total = self.nodes[0].samples as f64;
        let mut imp = vec![0.0; FEATURE_COUNT];
        for n in &self.nodes {
            if let Some(s) = n.split {
                imp[s.feature] += n.samples as f64 / total * s.gain;
            }
        }
        let sum: f64 = imp.iter().sum();
        if sum > 0.0 {
            for v in &mut imp {
                *v /= sum;
            }
        }
        self.feature_importances = imp;
    }

    /// Feature indices by descending importance, ties to the lower index.
    pub fn importance_ranking(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.feature_importances.len()).collect();
        order.sort_by(|&a, &b| {
            self.feature_importances[b]
                .total_cmp(&self.feature_importances[a])
                .then(a.cmp(&b))
        });
        order
    }

    fn leaf_for(&self, values: &[f64; FEATURE_COUNT]) -> (usize, Vec<Rule>) {
        let mut i = 0;
        let mut path = Vec::new();
        while let Some(s) = self.nodes[i].split {
            let below = values[s.feature] < s.threshold;
            path.push(Rule {
                feature: self.feature_names[s.feature].clone(),
                feature_index: s.feature,
                threshold: s.threshold,
                direction: if below {
                    Direction::Below
                } else {
                    Direction::AtOrAbove
                },
            });
            i = if below { s.left } else { s.right };
        }
        (i, path)
    }

    /// Weighted entropy of the leaves under `i`, relative to the root size.
    fn subtree_risk(&self, i: usize) -> f64 {
        match self.nodes[i].split {
            Some(s) => self.subtree_risk(s.left) + self.subtree_risk(s.right),
            None => self.node_risk(i),
        }
    }

    fn node_risk(&self, i: usize) -> f64 {
        let n = &self.nodes[i];
        n.samples as f64 / self.nodes[0].samples as f64 * n.entropy()
    }

    /// Weakest-link cost-complexity pruning with entropy as the risk:
    /// repeatedly collapse the internal node with the smallest
    /// (R(node) − R(subtree)) / (leaves − 1) while that value is ≤ `alpha`.
    pub fn prune(&self, alpha: f64) -> DecisionTree {
        let mut t = self.clone();
        loop {
            let mut weakest: Option<(f64, usize)> = None;
            for i in 0..t.nodes.len() {
                if t.nodes[i].split.is_none() || !t.reachable(i) {
                    continue;
                }
                let g = (t.node_risk(i) - t.subtree_risk(i)) / (t.leaves_under(i) - 1) as f64;
                if weakest.is_none_or(|(wg, _)| g < wg) {
                    weakest = Some((g, i));
                }
            }
            match weakest {
                Some((g, i)) if g <= alpha => t.nodes[i].split = None,
                _ => break,
            }
        }
        t.compact();
        t.update_importances();
        t
    }

    fn reachable(&self, target: usize) -> bool {
        let mut stack = vec![0];
        while let Some(i) = stack.pop() {
            if i == target {
                return true;
            }
            if let Some(s) = self.nodes[i].split {
                stack.push(s.left);
                stack.push(s.right);
            }
        }
        false
    }

    /// Drop unreachable nodes, renumbering in pre-order.
    fn compact(&mut self) {
        fn copy(old: &[Node], i: usize, out: &mut Vec<Node>) -> usize {
            let id = out.len();
            out.push(Node {
                split: None,
                ..old[i]
            });
            if let Some(s) = old[i].split {
                let l = copy(old, s.left, out);
                let r = copy(old, s.right, out);
                out[id].split = Some(Split {
                    left: l,
                    right: r,
                    ..s
                });
            }
            id
        }
        let mut out = Vec::with_capacity(self.nodes.len());
        copy(&self.nodes, 0, &mut out);
        self.nodes = out;
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Json {
            context: "encoding decision tree".into(),
            source: e,
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let t: DecisionTree = serde_json::from_str(text).map_err(|e| Error::Json {
            context: "parsing decision tree".into(),
            source: e,
        })?;
        if t.nodes.is_empty() || t.feature_names.len() != FEATURE_COUNT {
            return Err(Error::invalid("decision tree has no nodes or wrong feature count"));
        }
        for n in &t.nodes {
            if n.samples == 0 || n.errors > n.samples {
                return Err(Error::invalid("decision tree node has inconsistent counts"));
            }
            if let Some(s) = n.split {
                if s.feature >= FEATURE_COUNT || s.left >= t.nodes.len() || s.right >= t.nodes.len() {
                    return Err(Error::invalid("decision tree split out of range"));
                }
            }
        }
        Ok(t)
    }
}

/// Error probability at the leaf reached by threshold descent.
pub fn predict_error(tree: &DecisionTree, row: &FeatureRow) -> f64 {
    let (leaf, _) = tree.leaf_for(&row.values());
    tree.nodes[leaf].probability()
}

/// Root-to-leaf rules followed by `row`.
pub fn explain_prediction(tree: &DecisionTree, row: &FeatureRow) -> Vec<Rule> {
    tree.leaf_for(&row.values()).1
}
