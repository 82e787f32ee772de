//! Independent oracles and experiment setups shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeSet;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rnnsm::coverage::Criterion;
use rnnsm::extract::{
    build_sm, extract, AbstractTrace, Discretizer, KMeansGeometry, KMeansParams, Method,
    StateMachine,
};
use rnnsm::predict::{extract_all, predict_error, train_tree, DecisionTree, TreeParams};
use rnnsm::stats::{map_suites, roc_auc, significance_matrix, SignificanceRow};
use rnnsm::synth::{ErrorModel, ErrorPlacement, PlantedSource, SourceConfig};
use rnnsm::trace::{Role, StateVector, Trace, TraceSet};

// ---------------------------------------------------------------- eigen

/// Cyclic Jacobi eigen-decomposition of a symmetric matrix. Returns
/// eigenvalues descending and matching unit eigenvectors.
pub fn jacobi_eigen(mut a: Vec<Vec<f64>>) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = a.len();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for row in v.iter_mut() {
                    let vp = row[p];
                    let vq = row[q];
                    row[p] = c * vp - s * vq;
                    row[q] = s * vp + c * vq;
                }
            }
        }
    }
    let mut pairs: Vec<(f64, Vec<f64>)> = (0..n)
        .map(|j| (a[j][j], (0..n).map(|i| v[i][j]).collect()))
        .collect();
    pairs.sort_by(|x, y| y.0.total_cmp(&x.0));
    pairs.into_iter().unzip()
}

pub fn mat_mul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let m = b[0].len();
    (0..n)
        .map(|i| (0..m).map(|j| (0..b.len()).map(|k| a[i][k] * b[k][j]).sum()).collect())
        .collect()
}

pub fn mat_vec(a: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    a.iter().map(|r| r.iter().zip(x).map(|(p, q)| p * q).sum()).collect()
}

pub fn mean_of(points: &[Vec<f64>]) -> Vec<f64> {
    let d = points[0].len();
    (0..d)
        .map(|j| points.iter().map(|p| p[j]).sum::<f64>() / points.len() as f64)
        .collect()
}

/// Σ (x − m)(x − m)ᵀ.
pub fn scatter(points: &[Vec<f64>], m: &[f64]) -> Vec<Vec<f64>> {
    let d = m.len();
    let mut s = vec![vec![0.0; d]; d];
    for p in points {
        for i in 0..d {
            for j in 0..d {
                s[i][j] += (p[i] - m[i]) * (p[j] - m[j]);
            }
        }
    }
    s
}

/// Equal up to sign within `tol`, entrywise.
pub fn same_direction(a: &[f64], b: &[f64], tol: f64) -> bool {
    let plus = a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol);
    let minus = a.iter().zip(b).all(|(x, y)| (x + y).abs() <= tol);
    plus || minus
}

/// Largest entrywise deviation between `a` and `±b`, whichever sign fits.
pub fn direction_error(a: &[f64], b: &[f64]) -> f64 {
    let plus = a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let minus = a.iter().zip(b).map(|(x, y)| (x + y).abs()).fold(0.0, f64::max);
    plus.min(minus)
}

/// Fisher directions by an independent route: symmetric inverse square
/// root of the regularized within-class scatter from Jacobi, then Jacobi on
/// S_w^{-1/2} S_b S_w^{-1/2}.
pub fn lda_oracle(points: &[Vec<f64>], labels: &[usize]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let d = points[0].len();
    let m = mean_of(points);
    let classes: BTreeSet<usize> = labels.iter().copied().collect();
    let mut sw = vec![vec![0.0; d]; d];
    let mut sb = vec![vec![0.0; d]; d];
    for c in classes {
        let members: Vec<Vec<f64>> = points
            .iter()
            .zip(labels)
            .filter(|(_, &l)| l == c)
            .map(|(p, _)| p.clone())
            .collect();
        let mc = mean_of(&members);
        let s = scatter(&members, &mc);
        for i in 0..d {
            for j in 0..d {
                sw[i][j] += s[i][j];
                sb[i][j] += members.len() as f64 * (mc[i] - m[i]) * (mc[j] - m[j]);
            }
        }
    }
    let eps = 1e-6 * (0..d).map(|i| sw[i][i]).sum::<f64>() / d as f64;
    for (i, row) in sw.iter_mut().enumerate() {
        row[i] += eps;
    }
    let (vals, vecs) = jacobi_eigen(sw);
    let inv_sqrt: Vec<Vec<f64>> = (0..d)
        .map(|i| {
            (0..d)
                .map(|j| (0..d).map(|k| vecs[k][i] * vecs[k][j] / vals[k].sqrt()).sum())
                .collect()
        })
        .collect();
    let m2 = mat_mul(&mat_mul(&inv_sqrt, &sb), &inv_sqrt);
    let sym: Vec<Vec<f64>> = (0..d)
        .map(|i| (0..d).map(|j| (m2[i][j] + m2[j][i]) / 2.0).collect())
        .collect();
    let (lvals, ys) = jacobi_eigen(sym);
    let dirs = ys
        .iter()
        .map(|y| {
            let w = mat_vec(&inv_sqrt, y);
            let n = w.iter().map(|x| x * x).sum::<f64>().sqrt();
            w.iter().map(|x| x / n).collect()
        })
        .collect();
    (lvals, dirs)
}

// ---------------------------------------------------------------- KS / AUC

/// sup |F_a − F_b| evaluated at every sample point, O(n²).
pub fn ks_brute(a: &[f64], b: &[f64]) -> f64 {
    let mut d: f64 = 0.0;
    for &x in a.iter().chain(b) {
        let fa = a.iter().filter(|&&v| v <= x).count();
        let fb = b.iter().filter(|&&v| v <= x).count();
        d = d.max((fa as f64 / a.len() as f64 - fb as f64 / b.len() as f64).abs());
    }
    d
}

/// Share of (positive, negative) pairs ranked correctly, ties counting ½.
pub fn mann_whitney(scores: &[f64], labels: &[bool]) -> f64 {
    let mut wins = 0.0;
    let mut pairs = 0.0;
    for (i, &li) in labels.iter().enumerate() {
        if !li {
            continue;
        }
        for (j, &lj) in labels.iter().enumerate() {
            if lj {
                continue;
            }
            pairs += 1.0;
            if scores[i] > scores[j] {
                wins += 1.0;
            } else if scores[i] == scores[j] {
                wins += 0.5;
            }
        }
    }
    wins / pairs
}

// ---------------------------------------------------------------- fixtures

/// The four worked state machines: per-state histograms over two labels.
pub fn worked_sm_a() -> Vec<Vec<u64>> {
    vec![vec![0, 0], vec![1, 1], vec![1, 1], vec![1, 0], vec![0, 1], vec![1, 0]]
}

pub fn worked_sm_b() -> Vec<Vec<u64>> {
    vec![vec![0, 0], vec![1, 0], vec![0, 1], vec![2, 0], vec![0, 1], vec![0, 2]]
}

pub fn worked_sm_c() -> Vec<Vec<u64>> {
    vec![vec![0, 0], vec![1, 0], vec![0, 0], vec![0, 0], vec![2, 0], vec![0, 4]]
}

pub fn worked_sm_d() -> Vec<Vec<u64>> {
    vec![vec![0, 0], vec![0, 0], vec![0, 0], vec![3, 0], vec![0, 0], vec![0, 4]]
}

/// Six centroids far apart on a line, unit-ish radii.
pub fn line_geometry(k: usize) -> KMeansGeometry {
    let centroids: Vec<Vec<f64>> = (0..k).map(|i| vec![10.0 * i as f64, 0.0]).collect();
    KMeansGeometry {
        radii: rnnsm::extract::kmeans::neighbor_radii(&centroids, 8),
        extents: vec![0.0; k],
        centroids,
        neighbors: 8,
    }
}

/// A training set of single-step traces realizing per-state histograms on
/// [`line_geometry`].
pub fn machine_from_histograms(hist: &[Vec<u64>]) -> StateMachine {
    let mut traces = Vec::new();
    for (s, h) in hist.iter().enumerate() {
        for (l, &c) in h.iter().enumerate() {
            for j in 0..c {
                let v = vec![10.0 * s as f64 + 0.1 * j as f64, 0.0];
                traces.push(Trace::new(
                    format!("s{s}-l{l}-{j}"),
                    vec![StateVector(v)],
                    Some(l),
                    Some(l),
                ));
            }
        }
    }
    let set = TraceSet::with_label_count(traces, hist[0].len(), 2, Role::Training).unwrap();
    build_sm(Discretizer::kmeans(line_geometry(hist.len())), &set).unwrap()
}

/// (method, cell, purity %, richness, goodness) as reported for the two
/// data sets.
pub const REPORTED_ROWS: [(&str, &str, &str, f64, f64, f64); 15] = [
    ("image", "grid-pca", "LSTM", 76.0, 163.0, 10.7),
    ("image", "grid-lda", "LSTM", 90.0, 540.0, 183.6),
    ("image", "kmeans", "LSTM", 93.0, 2500.0, 1236.7),
    ("image", "grid-pca", "S-RNN", 49.0, 4285.0, 3.4),
    ("image", "grid-lda", "S-RNN", 81.0, 1225.0, 147.6),
    ("image", "kmeans", "S-RNN", 94.0, 833.0, 489.0),
    ("image", "grid-pca", "GRU", 19.0, 15000.0, 0.0),
    ("image", "grid-lda", "GRU", 78.0, 2143.0, 153.0),
    ("image", "kmeans", "GRU", 97.0, 3000.0, 2267.6),
    ("speech", "grid-pca", "LSTM", 99.0, 1.4, 1.2),
    ("speech", "grid-lda", "LSTM", 89.0, 52.0, 16.5),
    ("speech", "kmeans", "LSTM", 93.0, 256.0, 129.0),
    ("speech", "grid-pca", "GRU", 36.0, 1280.0, 0.05),
    ("speech", "grid-lda", "GRU", 99.0, 31.0, 26.8),
    ("speech", "kmeans", "GRU", 98.0, 427.0, 337.0),
];

/// Range of p¹⁰·R over p ∈ [P/100 − 0.005, P/100 + 0.005] and whether it
/// meets [0.99·G, 1.01·G].
pub fn reported_row_consistent(purity_pct: f64, richness: f64, goodness: f64) -> (bool, f64, f64) {
    let lo = (purity_pct / 100.0 - 0.005).max(0.0);
    let hi = (purity_pct / 100.0 + 0.005).min(1.0);
    let g_lo = lo.powi(10) * richness;
    let g_hi = hi.powi(10) * richness;
    let ok = g_hi >= 0.99 * goodness && g_lo <= 1.01 * goodness;
    (ok, g_lo, g_hi)
}

// ---------------------------------------------------------------- coverage

/// A random tiny instance: geometry, training set, test suite.
pub struct CoverageInstance {
    pub sm: StateMachine,
    pub training: TraceSet,
    pub suite: TraceSet,
}

pub fn random_coverage_instance(seed: u64) -> CoverageInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = rng.random_range(1..=10);
    let labels = rng.random_range(2..=3);
    let centroids: Vec<Vec<f64>> = (0..k)
        .map(|_| vec![rng.random_range(0.0..20.0), rng.random_range(0.0..20.0)])
        .collect();
    let radii = (0..k).map(|_| rng.random_range(0.5..2.0)).collect();
    let geometry = KMeansGeometry {
        centroids: centroids.clone(),
        radii,
        extents: vec![0.0; k],
        neighbors: 8,
    };
    let walk = |rng: &mut ChaCha8Rng, far: f64| -> Vec<StateVector> {
        let t = rng.random_range(1..=5);
        (0..t)
            .map(|_| {
                if rng.random_bool(far) {
                    StateVector(vec![
                        rng.random_range(40.0..60.0),
                        rng.random_range(40.0..60.0),
                    ])
                } else {
                    let c = &centroids[rng.random_range(0..k)];
                    StateVector(vec![
                        c[0] + rng.random_range(-0.3..0.3),
                        c[1] + rng.random_range(-0.3..0.3),
                    ])
                }
            })
            .collect()
    };
    let n_train = rng.random_range(1..=20);
    let training: Vec<Trace> = (0..n_train)
        .map(|i| {
            let states = walk(&mut rng, 0.0);
            let l = rng.random_range(0..labels);
            Trace::new(format!("tr{i}"), states, Some(l), Some(l))
        })
        .collect();
    let n_test = rng.random_range(0..=50);
    let suite: Vec<Trace> = (0..n_test)
        .map(|i| {
            let states = walk(&mut rng, 0.15);
            let pl = if rng.random_bool(0.05) {
                None
            } else {
                Some(rng.random_range(0..labels))
            };
            Trace::new(format!("te{i}"), states, pl, Some(rng.random_range(0..labels)))
        })
        .collect();
    let training = TraceSet::with_label_count(training, labels, 2, Role::Training).unwrap();
    let suite = TraceSet::with_label_count(suite, labels, 2, Role::Test).unwrap();
    let sm = build_sm(Discretizer::kmeans(geometry), &training).unwrap();
    CoverageInstance { sm, training, suite }
}

fn nearest_index(centroids: &[Vec<f64>], v: &[f64]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, c) in centroids.iter().enumerate() {
        let d: f64 = c.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum();
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    best
}

/// Criterion values by direct enumeration over state ids and labels.
/// Training walks are recomputed here by nearest centroid; the suite's
/// state assignments are taken from `mapped`. `None` marks an undefined
/// value.
pub fn coverage_oracle(
    centroids: &[Vec<f64>],
    training: &TraceSet,
    mapped: &[AbstractTrace],
    criterion: Criterion,
) -> Option<f64> {
    let n = centroids.len();
    let labels = training.label_count();
    let total_ids = mapped
        .iter()
        .flat_map(|t| t.state_ids.iter().map(|s| s.0 + 1))
        .max()
        .unwrap_or(0)
        .max(n);
    let walks: Vec<(Vec<usize>, usize)> = training
        .traces()
        .iter()
        .map(|t| {
            (
                t.states.iter().map(|v| nearest_index(centroids, v)).collect(),
                t.predicted_label.unwrap(),
            )
        })
        .collect();
    let w = |l: usize, s: usize| -> u64 {
        walks
            .iter()
            .filter(|(walk, pl)| *pl == l && *walk.last().unwrap() == s)
            .count() as u64
    };
    let train_final = |s: usize| (0..labels).any(|l| w(l, s) > 0);
    let visits = |s: usize| -> u64 {
        walks
            .iter()
            .map(|(walk, _)| walk.iter().filter(|&&x| x == s).count() as u64)
            .sum()
    };
    let train_trans = |a: usize, b: usize| -> u64 {
        walks
            .iter()
            .map(|(walk, _)| walk.windows(2).filter(|p| p[0] == a && p[1] == b).count() as u64)
            .sum()
    };
    let test_final = |s: usize| mapped.iter().any(|t| t.final_state.0 == s);
    let test_pair = |l: usize, s: usize| {
        mapped
            .iter()
            .any(|t| t.final_state.0 == s && t.predicted_label == Some(l))
    };
    let test_visit = |s: usize| mapped.iter().any(|t| t.state_ids.iter().any(|x| x.0 == s));
    let test_trans = |a: usize, b: usize| {
        mapped
            .iter()
            .any(|t| t.state_ids.windows(2).any(|p| p[0].0 == a && p[1].0 == b))
    };
    let ratio = |num: f64, den: f64| if den == 0.0 { None } else { Some(num / den) };
    let inv = |c: u64| 1.0 / (c as f64 + 1.0);

    match criterion {
        Criterion::NewFSCov => {
            let den = (0..n).filter(|&s| !train_final(s)).count() as f64;
            let num = (0..n).filter(|&s| !train_final(s) && test_final(s)).count() as f64;
            Some(if den == 0.0 { 0.0 } else { num / den })
        }
        Criterion::OutFSCov => Some((n..total_ids).filter(|&s| test_final(s)).count() as f64),
        Criterion::BasicFSCov => ratio(
            (0..n).filter(|&s| train_final(s) && test_final(s)).count() as f64,
            (0..n).filter(|&s| train_final(s)).count() as f64,
        ),
        Criterion::BasicLFSCov => {
            let mut num = 0.0;
            let mut den = 0.0;
            for l in 0..labels {
                for s in 0..n {
                    if w(l, s) > 0 {
                        den += 1.0;
                        if test_pair(l, s) {
                            num += 1.0;
                        }
                    }
                }
            }
            ratio(num, den)
        }
        Criterion::WeightedBasicLFSCov => {
            let mut num = 0.0;
            let mut den = 0.0;
            for l in 0..labels {
                for s in 0..n {
                    let wl = w(l, s);
                    if wl > 0 {
                        den += wl as f64;
                        if test_pair(l, s) {
                            num += wl as f64;
                        }
                    }
                }
            }
            ratio(num, den)
        }
        Criterion::WeightedLFSCov => {
            let mut sum = 0.0;
            for l in 0..labels {
                for s in 0..total_ids {
                    if test_pair(l, s) {
                        sum += inv(if s < n { w(l, s) } else { 0 });
                    }
                }
            }
            Some(sum)
        }
        Criterion::BasicSCov => ratio((0..n).filter(|&s| test_visit(s)).count() as f64, n as f64),
        Criterion::WeightedSCov => {
            let mut num = 0.0;
            let mut den = 0.0;
            for s in 0..n {
                den += inv(visits(s));
                if test_visit(s) {
                    num += inv(visits(s));
                }
            }
            ratio(num, den)
        }
        Criterion::OutSCov => Some((n..total_ids).filter(|&s| test_visit(s)).count() as f64),
        Criterion::BasicTCov | Criterion::WeightedTCov => {
            let weighted = criterion == Criterion::WeightedTCov;
            let mut num = 0.0;
            let mut den = 0.0;
            for a in 0..n {
                for b in 0..n {
                    let c = train_trans(a, b);
                    if c > 0 {
                        let x = if weighted { inv(c) } else { 1.0 };
                        den += x;
                        if test_trans(a, b) {
                            num += x;
                        }
                    }
                }
            }
            ratio(num, den)
        }
    }
}

// ---------------------------------------------------------------- experiments

pub const EXPERIMENT_SEED: u64 = 20_240_517;

/// Source for the significance experiment: errors are independent of the
/// walk except for a 5× boost on off-manifold traces.
pub fn ks_source() -> PlantedSource {
    let cfg = SourceConfig {
        dim: 3,
        transit_centers: 4,
        terminal_centers: 6,
        label_count: 3,
        noise_sigma: 0.1,
        separation: 3.0,
        purity: 1.0,
        impure_fraction: 0.0,
        low_purity: 0.6,
        error_model: ErrorModel {
            base_rate: 0.1,
            purity_threshold: 0.9,
            impure_boost: 1.0,
            off_manifold_boost: 5.0,
            placement: ErrorPlacement::Silent,
        },
    };
    PlantedSource::random(&cfg, EXPERIMENT_SEED).unwrap()
}

pub const KS_SUITES: usize = 200;
pub const KS_SUITE_SIZE: usize = 200;
pub const TRACE_LEN: usize = 5;

pub fn kmeans_machine(source: &PlantedSource, n_train: usize) -> StateMachine {
    let training = source.generate(n_train, TRACE_LEN, source.noise_sigma).unwrap();
    extract(
        &training.set,
        &Method::Kmeans(KMeansParams::new(source.centers.len(), EXPERIMENT_SEED)),
    )
    .unwrap()
}

/// Significance of every criterion over a suite family.
pub fn ks_experiment(sm: &StateMachine, source: &PlantedSource, perturbation: f64) -> Vec<SignificanceRow> {
    let suites: Vec<TraceSet> = source
        .generate_suite_family(KS_SUITES, KS_SUITE_SIZE, TRACE_LEN, perturbation)
        .unwrap()
        .into_iter()
        .map(|b| b.set)
        .collect();
    significance_matrix(sm, &suites, &Criterion::ALL).unwrap()
}

/// Source for the error-prediction experiment: errors change the predicted
/// label and are 5× likelier at impure or off-manifold finals.
pub fn predictor_source() -> PlantedSource {
    let cfg = SourceConfig {
        dim: 3,
        transit_centers: 4,
        terminal_centers: 8,
        label_count: 3,
        noise_sigma: 0.1,
        separation: 3.0,
        purity: 1.0,
        impure_fraction: 0.25,
        low_purity: 0.6,
        error_model: ErrorModel {
            base_rate: 0.06,
            purity_threshold: 0.9,
            impure_boost: 5.0,
            off_manifold_boost: 5.0,
            placement: ErrorPlacement::LabelFlip,
        },
    };
    PlantedSource::random(&cfg, EXPERIMENT_SEED).unwrap()
}

pub struct PredictorOutcome {
    pub tree: DecisionTree,
    pub auc: f64,
    pub eval_rows: usize,
}

/// Train on one perturbed suite, score a disjoint one.
pub fn predictor_experiment() -> PredictorOutcome {
    let source = predictor_source();
    let sm = kmeans_machine(&source, 2000);
    let family = source.generate_suite_family(2, 3000, TRACE_LEN, 0.2).unwrap();
    let sets: Vec<TraceSet> = family.into_iter().map(|b| b.set).collect();
    let mapped = map_suites(&sm, &sets).unwrap();
    let train_rows = extract_all(&sm, &mapped[0]);
    let eval_rows = extract_all(&sm, &mapped[1]);
    let tree = train_tree(&train_rows, TreeParams::default()).unwrap();
    let scores: Vec<f64> = eval_rows.iter().map(|r| predict_error(&tree, r)).collect();
    let labels: Vec<bool> = eval_rows.iter().map(|r| r.error.unwrap()).collect();
    let auc = roc_auc(&scores, &labels).unwrap().auc;
    PredictorOutcome {
        tree,
        auc,
        eval_rows: eval_rows.len(),
    }
}

// ---------------------------------------------------------------- rnn

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub const SRNN_1D: &str = r#"{
  "cell": "srnn", "input_dim": 1, "hidden_dim": 1,
  "gates": {"h": {"W": [[0.5]], "U": [[-0.3]], "b": [0.1]}},
  "readout": {"W": [[1.0], [-1.0]], "b": [0.0, 0.0]},
  "labels": ["pos", "neg"]
}"#;

pub const LSTM_1D: &str = r#"{
  "cell": "lstm", "input_dim": 1, "hidden_dim": 1,
  "gates": {
    "f": {"W": [[0.4]], "U": [[0.2]], "b": [1.0]},
    "i": {"W": [[-0.7]], "U": [[0.5]], "b": [0.0]},
    "o": {"W": [[0.3]], "U": [[-0.6]], "b": [0.2]},
    "c": {"W": [[1.1]], "U": [[0.9]], "b": [-0.1]}
  },
  "readout": {"W": [[1.0], [-1.0]], "b": [0.0, 0.0]},
  "labels": ["pos", "neg"]
}"#;

pub const GRU_1D: &str = r#"{
  "cell": "gru", "input_dim": 1, "hidden_dim": 1,
  "gates": {
    "z": {"W": [[1.0]], "U": [[0.5]], "b": [0.0]},
    "r": {"W": [[-0.4]], "U": [[0.8]], "b": [0.3]},
    "u": {"W": [[1.0]], "U": [[-1.2]], "b": [0.0]}
  },
  "readout": {"W": [[1.0], [-1.0]], "b": [0.0, 0.0]},
  "labels": ["pos", "neg"]
}"#;

pub const INPUTS_1D: [f64; 3] = [1.0, -2.0, 0.5];

/// Hidden values after each input, written out from the cell equations.
pub fn srnn_oracle(xs: &[f64]) -> Vec<f64> {
    let mut h = 0.0f64;
    xs.iter()
        .map(|&x| {
            h = (0.5 * x - 0.3 * h + 0.1).tanh();
            h
        })
        .collect()
}

pub fn lstm_oracle(xs: &[f64]) -> Vec<f64> {
    let (mut h, mut c) = (0.0f64, 0.0f64);
    xs.iter()
        .map(|&x| {
            let f = sigmoid(0.4 * x + 0.2 * h + 1.0);
            let i = sigmoid(-0.7 * x + 0.5 * h);
            let o = sigmoid(0.3 * x - 0.6 * h + 0.2);
            let cand = (1.1 * x + 0.9 * h - 0.1).tanh();
            c = f * c + i * cand;
            h = o * c.tanh();
            h
        })
        .collect()
}

pub fn gru_oracle(xs: &[f64]) -> Vec<f64> {
    let mut h = 0.0f64;
    xs.iter()
        .map(|&x| {
            let z = sigmoid(x + 0.5 * h);
            let r = sigmoid(-0.4 * x + 0.8 * h + 0.3);
            let u = (x - 1.2 * (r * h)).tanh();
            h = z * h + (1.0 - z) * u;
            h
        })
        .collect()
}
