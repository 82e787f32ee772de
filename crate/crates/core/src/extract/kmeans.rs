//! Seeded k-means++ initialization followed by Lloyd iterations.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_MAX_ITER: usize = 300;
pub const DEFAULT_TOLERANCE: f64 = 1e-6;
pub const DEFAULT_NEIGHBORS: usize = 8;
pub const DEFAULT_N_INIT: usize = 10;

fn default_n_init() -> usize {
    DEFAULT_N_INIT
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansParams {
    pub k: usize,
    pub seed: u64,
    pub max_iter: usize,
    /// Stop once no centroid moves farther than this.
    pub tolerance: f64,
    /// Number of nearest centroids considered when computing a radius.
    pub neighbors: usize,
    /// Independent k-means++ starts; the run with the lowest final inertia is kept.
    #[serde(default = "default_n_init")]
    pub n_init: usize,
}

impl KMeansParams {
    pub fn new(k: usize, seed: u64) -> Self {
        KMeansParams {
            k,
            seed,
            max_iter: DEFAULT_MAX_ITER,
            tolerance: DEFAULT_TOLERANCE,
            neighbors: DEFAULT_NEIGHBORS,
            n_init: DEFAULT_N_INIT,
        }
    }
}

/// Cluster geometry used by the state machine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansGeometry {
    pub centroids: Vec<Vec<f64>>,
    /// Out-of-boundary radius: the largest half-distance to one of the
    /// `neighbors` nearest centroids.
    pub radii: Vec<f64>,
    /// Distance from each centroid to its farthest training member.
    pub extents: Vec<f64>,
    pub neighbors: usize,
}

impl KMeansGeometry {
    pub fn k(&self) -> usize {
        self.centroids.len()
    }

    pub fn dim(&self) -> usize {
        self.centroids.first().map_or(0, Vec::len)
    }

    /// Radius within which a vector belongs to the cluster: the larger of the
    /// neighbor-border radius and the training extent, so every training
    /// point lies inside its own cluster.
    pub fn acceptance_radius(&self, state: usize) -> f64 {
        self.radii[state].max(self.extents[state])
    }

    /// Nearest centroid and its distance, ties to the lowest index.
    pub fn nearest(&self, v: &[f64]) -> (usize, f64) {
        nearest(&self.centroids, v)
    }

    pub fn validate(&self) -> Result<()> {
        if self.centroids.is_empty() {
            return Err(Error::invalid("k-means geometry has no centroids"));
        }
        let d = self.dim();
        if d == 0 {
            return Err(Error::invalid("k-means centroids have zero dimension"));
        }
        if self.radii.len() != self.k() || self.extents.len() != self.k() {
            return Err(Error::invalid("radius/extent count differs from centroid count"));
        }
        for c in &self.centroids {
            if c.len() != d {
                return Err(Error::DimensionMismatch {
                    context: "centroid".into(),
                    expected: d,
                    actual: c.len(),
                });
            }
            crate::error::check_finite(c, || "centroid".into())?;
        }
        if self.radii.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
            return Err(Error::invalid("radii must be positive and finite"));
        }
        Ok(())
    }
}

/// Everything produced by one k-means run.
#[derive(Debug, Clone, PartialEq)]
pub struct KMeansFit {
    pub geometry: KMeansGeometry,
    pub assignments: Vec<usize>,
    /// Inertia after each assignment step; non-increasing.
    pub inertia_history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl KMeansFit {
    pub fn inertia(&self) -> f64 {
        *self.inertia_history.last().expect("at least one assignment step")
    }
}

pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn distance(a: &[f64], b: &[f64]) -> f64 {
    squared_distance(a, b).sqrt()
}

pub(crate) fn nearest(centroids: &[Vec<f64>], v: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, c) in centroids.iter().enumerate() {
        let d = squared_distance(c, v);
        if d < best.1 {
            best = (i, d);
        }
    }
    (best.0, best.1.sqrt())
}

/// Sum of squared distances from each point to its assigned centroid.
pub fn inertia(points: &[Vec<f64>], centroids: &[Vec<f64>], assignments: &[usize]) -> f64 {
    points
        .iter()
        .zip(assignments)
        .map(|(p, &a)| squared_distance(p, &centroids[a]))
        .sum()
}

fn kmeans_plus_plus(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut chosen = vec![rng.random_range(0..n)];
    let mut d2: Vec<f64> = points
        .iter()
        .map(|p| squared_distance(p, &points[chosen[0]]))
        .collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                acc += w;
                if acc > target && w > 0.0 {
                    pick = i;
                    break;
                }
            }
            pick
        } else {
            // All remaining points coincide with a chosen center.
            (0..n).find(|i| !chosen.contains(i)).unwrap_or(0)
        };
        chosen.push(next);
        for (i, p) in points.iter().enumerate() {
            d2[i] = d2[i].min(squared_distance(p, &points[next]));
        }
    }
    chosen.into_iter().map(|i| points[i].clone()).collect()
}

fn assign(points: &[Vec<f64>], centroids: &[Vec<f64>]) -> Vec<(usize, f64)> {
    points
        .par_iter()
        .map(|p| {
            let (i, d) = nearest(centroids, p);
            (i, d * d)
        })
        .collect()
}

/// Neighbor-border radius per centroid: `max_i ½‖c − c_i‖` over the
/// `min(neighbors, K−1)` nearest other centroids.
pub fn neighbor_radii(centroids: &[Vec<f64>], neighbors: usize) -> Vec<f64> {
    let k = centroids.len();
    centroids
        .iter()
        .enumerate()
        .map(|(s, c)| {
            let mut dists: Vec<f64> = centroids
                .iter()
                .enumerate()
                .filter(|&(i, _)| i != s)
                .map(|(_, o)| distance(c, o))
                .collect();
            dists.sort_by(f64::total_cmp);
            let take = neighbors.min(k.saturating_sub(1));
            dists.into_iter().take(take).fold(0.0, f64::max) / 2.0
        })
        .collect()
}

fn check_points(points: &[Vec<f64>]) -> Result<usize> {
    let d = points
        .first()
        .map(Vec::len)
        .ok_or_else(|| Error::invalid("k-means needs at least one point"))?;
    if d == 0 {
        return Err(Error::invalid("points must have positive dimension"));
    }
    for p in points {
        if p.len() != d {
            return Err(Error::DimensionMismatch {
                context: "k-means input".into(),
                expected: d,
                actual: p.len(),
            });
        }
        crate::error::check_finite(p, || "k-means input".into())?;
    }
    Ok(d)
}

struct LloydRun {
    centroids: Vec<Vec<f64>>,
    assigned: Vec<(usize, f64)>,
    history: Vec<f64>,
    iterations: usize,
    converged: bool,
}

impl LloydRun {
    fn final_inertia(&self) -> f64 {
        *self.history.last().expect("at least one assignment step")
    }
}

fn lloyd(points: &[Vec<f64>], params: &KMeansParams, d: usize, rng: &mut ChaCha8Rng) -> LloydRun {
    let k = params.k;
    let mut centroids = kmeans_plus_plus(points, k, rng);
    let mut history: Vec<f64> = Vec::new();
    let mut iterations = 0;
    let mut converged = false;
    let mut assigned = assign(points, &centroids);

    loop {
        let current: f64 = assigned.iter().map(|a| a.1).sum();
        if let Some(&prev) = history.last() {
            debug_assert!(
                current <= prev + 1e-9 * prev.abs().max(1.0),
                "Lloyd inertia increased: {prev} -> {current}"
            );
        }
        history.push(current);
        if iterations >= params.max_iter {
            break;
        }
        iterations += 1;

        let mut sums = vec![vec![0.0; d]; k];
        let mut counts = vec![0usize; k];
        for (p, &(a, _)) in points.iter().zip(&assigned) {
            counts[a] += 1;
            for (s, x) in sums[a].iter_mut().zip(p) {
                *s += x;
            }
        }
        let mut next: Vec<Vec<f64>> = sums
            .into_iter()
            .zip(&counts)
            .zip(&centroids)
            .map(|((s, &n), old)| {
                if n == 0 {
                    old.clone()
                } else {
                    s.into_iter().map(|x| x / n as f64).collect()
                }
            })
            .collect();

        // Empty clusters are reseeded at the point farthest from its centroid.
        let mut taken = vec![false; points.len()];
        for c in 0..k {
            if counts[c] > 0 {
                continue;
            }
            let far = assigned
                .iter()
                .enumerate()
                .filter(|(i, _)| !taken[*i])
                .max_by(|a, b| a.1 .1.total_cmp(&b.1 .1).then(b.0.cmp(&a.0)))
                .map(|(i, _)| i);
            if let Some(i) = far {
                taken[i] = true;
                next[c] = points[i].clone();
            }
        }

        let shift = centroids
            .iter()
            .zip(&next)
            .map(|(a, b)| distance(a, b))
            .fold(0.0, f64::max);
        centroids = next;
        assigned = assign(points, &centroids);
        if shift < params.tolerance {
            let last: f64 = assigned.iter().map(|a| a.1).sum();
            debug_assert!(last <= current + 1e-9 * current.abs().max(1.0));
            history.push(last);
            converged = true;
            break;
        }
    }
    LloydRun {
        centroids,
        assigned,
        history,
        iterations,
        converged,
    }
}

pub fn fit_kmeans(points: &[Vec<f64>], params: &KMeansParams) -> Result<KMeansFit> {
    let d = check_points(points)?;
    let k = params.k;
    if k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    if k > points.len() {
        return Err(Error::invalid(format!(
            "k = {k} exceeds the number of points ({})",
            points.len()
        )));
    }
    if params.n_init == 0 {
        return Err(Error::invalid("n_init must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut best: Option<LloydRun> = None;
    for _ in 0..params.n_init {
        let run = lloyd(points, params, d, &mut rng);
        let better = best
            .as_ref()
            .is_none_or(|b| run.final_inertia() < b.final_inertia());
        if better {
            best = Some(run);
        }
    }
    let LloydRun {
        centroids,
        assigned,
        history,
        iterations,
        converged,
    } = best.expect("n_init >= 1");

    let assignments: Vec<usize> = assigned.iter().map(|a| a.0).collect();
    let mut extents = vec![0.0f64; k];
    for (p, &a) in points.iter().zip(&assignments) {
        extents[a] = extents[a].max(distance(p, &centroids[a]));
    }
    let neighbor = neighbor_radii(&centroids, params.neighbors);
    let radii = neighbor
        .iter()
        .zip(&extents)
        .map(|(&r, &e)| {
            if r > 0.0 {
                r
            } else if e > 0.0 {
                e
            } else {
                f64::EPSILON
            }
        })
        .collect();

    Ok(KMeansFit {
        geometry: KMeansGeometry {
            centroids,
            radii,
            extents,
            neighbors: params.neighbors,
        },
        assignments,
        inertia_history: history,
        iterations,
        converged,
    })
}
