mod common;

use common::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rnnsm::extract::kmeans::{inertia, neighbor_radii, squared_distance};
use rnnsm::extract::{
    all_states, build_sm, extract, fit_grid, fit_kmeans, Discretizer, KMeansParams, Method,
    ProjectionSpec, StateId, StateMachine,
};
use rnnsm::trace::{Role, StateVector, Trace, TraceSet};

fn sv(v: &[f64]) -> StateVector {
    StateVector(v.to_vec())
}

fn random_points(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| (0..dim).map(|_| rng.random_range(-5.0..5.0)).collect())
        .collect()
}

/// Plain Lloyd from `k` distinct random data points.
fn lloyd_from_random_start(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> f64 {
    let mut idx: Vec<usize> = (0..points.len()).collect();
    for i in 0..k {
        let j = rng.random_range(i..idx.len());
        idx.swap(i, j);
    }
    let mut centroids: Vec<Vec<f64>> = idx[..k].iter().map(|&i| points[i].clone()).collect();
    let mut assign = vec![0; points.len()];
    for _ in 0..500 {
        for (a, p) in assign.iter_mut().zip(points) {
            *a = (0..k)
                .min_by(|&x, &y| squared_distance(p, &centroids[x]).total_cmp(&squared_distance(p, &centroids[y])))
                .unwrap();
        }
        let mut next = centroids.clone();
        for (c, slot) in next.iter_mut().enumerate() {
            let members: Vec<Vec<f64>> =
                points.iter().zip(&assign).filter(|(_, &a)| a == c).map(|(p, _)| p.clone()).collect();
            if !members.is_empty() {
                *slot = mean_of(&members);
            }
        }
        if next == centroids {
            break;
        }
        centroids = next;
    }
    inertia(points, &centroids, &assign)
}

#[test]
fn kmeans_near_restart_optimum() {
    let mut rng = ChaCha8Rng::seed_from_u64(30);
    let points = random_points(&mut rng, 30, 2);
    let best = (0..200)
        .map(|_| lloyd_from_random_start(&points, 3, &mut rng))
        .fold(f64::INFINITY, f64::min);
    let fit = fit_kmeans(&points, &KMeansParams::new(3, 7)).unwrap();
    assert!(fit.inertia() <= best * 1.05, "{} vs {best}", fit.inertia());
}

#[test]
fn kmeans_two_tight_pairs() {
    let points = vec![vec![0.0, 0.0], vec![0.0, 0.2], vec![9.0, 9.0], vec![9.2, 9.0]];
    let fit = fit_kmeans(&points, &KMeansParams::new(2, 1)).unwrap();
    let mut c = fit.geometry.centroids.clone();
    c.sort_by(|a, b| a[0].total_cmp(&b[0]));
    assert_eq!(c, vec![vec![0.0, 0.1], vec![9.1, 9.0]]);
}

#[test]
fn kmeans_preconditions_and_determinism() {
    let points = vec![vec![0.0], vec![1.0]];
    assert!(fit_kmeans(&points, &KMeansParams::new(3, 1)).is_err());
    assert!(fit_kmeans(&[], &KMeansParams::new(1, 1)).is_err());
    assert!(fit_kmeans(&points, &KMeansParams::new(0, 1)).is_err());

    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let points = random_points(&mut rng, 300, 4);
    let a = fit_kmeans(&points, &KMeansParams::new(12, 99)).unwrap();
    let b = fit_kmeans(&points, &KMeansParams::new(12, 99)).unwrap();
    assert_eq!(a, b);
}

#[test]
fn radii_match_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for k in [1, 2, 5, 12] {
        let centroids = random_points(&mut rng, k, 3);
        for nc in [1, 3, 8] {
            let radii = neighbor_radii(&centroids, nc);
            for (i, c) in centroids.iter().enumerate() {
                let mut d: Vec<f64> = centroids
                    .iter()
                    .enumerate()
                    .filter(|(j, _)| *j != i)
                    .map(|(_, o)| squared_distance(c, o).sqrt() / 2.0)
                    .collect();
                d.sort_by(f64::total_cmp);
                let expect = d.iter().take(nc.min(k - 1)).cloned().fold(0.0, f64::max);
                assert!((radii[i] - expect).abs() < 1e-12);
            }
        }
    }
}

fn single_state_machine() -> StateMachine {
    let g = line_geometry(3);
    let t = Trace::new("t", vec![sv(&[0.0, 0.0]), sv(&[0.1, 0.0]), sv(&[0.0, 0.1])], Some(1), Some(1));
    let set = TraceSet::with_label_count(vec![t], 2, 2, Role::Training).unwrap();
    build_sm(Discretizer::kmeans(g), &set).unwrap()
}

#[test]
fn self_loops_and_final_histogram() {
    let sm = single_state_machine();
    assert_eq!(sm.transition_count(StateId(0), StateId(0)), 2);
    assert_eq!(sm.final_count(StateId(0), 1), 1);
    assert_eq!(sm.final_states(), vec![StateId(0)]);
    assert_eq!(sm.transition_prob(StateId(0), StateId(0)), 1.0);
    assert_eq!(sm.transition_prob(StateId(0), StateId(1)), 0.0);
    assert_eq!(sm.transition_prob(StateId(2), StateId(0)), 0.0);
}

#[test]
fn only_edge_has_probability_one() {
    let traces: Vec<Trace> = (0..4)
        .map(|i| Trace::new(format!("t{i}"), vec![sv(&[0.0, 0.0]), sv(&[10.0, 0.0])], Some(0), Some(0)))
        .collect();
    let set = TraceSet::with_label_count(traces, 2, 2, Role::Training).unwrap();
    let sm = build_sm(Discretizer::kmeans(line_geometry(2)), &set).unwrap();
    assert_eq!(sm.transition_count(StateId(0), StateId(1)), 4);
    assert_eq!(sm.transition_prob(StateId(0), StateId(1)), 1.0);
}

#[test]
fn worked_machine_has_five_final_states() {
    let sm = machine_from_histograms(&worked_sm_b());
    assert_eq!(sm.final_states().len(), 5);
    assert_eq!(sm.histograms(), worked_sm_b().as_slice());
    assert_eq!(sm.total_finals(), 7);
}

#[test]
fn build_rejects_bad_training_sets() {
    let g = line_geometry(2);
    let null = Trace::new("n", vec![sv(&[0.0, 0.0])], None, Some(0));
    let set = TraceSet::with_label_count(vec![null], 2, 2, Role::Training).unwrap();
    assert!(build_sm(Discretizer::kmeans(g.clone()), &set).is_err());
    let ok = Trace::new("o", vec![sv(&[0.0, 0.0])], Some(0), Some(0));
    let test_role = TraceSet::with_label_count(vec![ok.clone()], 2, 2, Role::Test).unwrap();
    assert!(build_sm(Discretizer::kmeans(g.clone()), &test_role).is_err());
    let wrong_dim = TraceSet::with_label_count(
        vec![Trace::new("w", vec![sv(&[0.0, 0.0, 0.0])], Some(0), Some(0))],
        2,
        3,
        Role::Training,
    )
    .unwrap();
    assert!(build_sm(Discretizer::kmeans(g), &wrong_dim).is_err());
}

#[test]
fn centroid_maps_home_and_far_point_creates_state() {
    let mut sm = single_state_machine();
    let at = sm.map_trace(&Trace::new("c", vec![sv(&[10.0, 0.0])], Some(0), None), false).unwrap();
    assert_eq!(at.state_ids, vec![StateId(1)]);
    assert_eq!(at.is_new, vec![false]);

    let r = sm.discretizer().basic_count();
    let far = Trace::new("f", vec![sv(&[0.0, 50.0]), sv(&[0.0, 50.5])], Some(0), None);
    let at = sm.map_trace(&far, false).unwrap();
    assert_eq!(at.is_new, vec![true, true]);
    assert_eq!(at.state_ids, vec![StateId(r), StateId(r)]);
    assert!(sm.dynamic().is_empty());

    sm.map_trace(&far, true).unwrap();
    assert_eq!(sm.dynamic().len(), 1);
    let again = sm.map_trace(&Trace::new("g", vec![sv(&[0.0, 50.2])], Some(0), None), true).unwrap();
    assert_eq!(again.state_ids, vec![StateId(r)]);
    assert_eq!(sm.dynamic().len(), 1);
    sm.reset_dynamic();
    assert!(sm.dynamic().is_empty());

    assert!(sm.map_trace(&Trace::new("d", vec![sv(&[0.0])], None, None), false).is_err());
}

fn planted_training(seed: u64) -> TraceSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers: Vec<Vec<f64>> = (0..5).map(|i| vec![4.0 * i as f64, (i % 2) as f64 * 3.0, 1.0]).collect();
    let traces = (0..120)
        .map(|i| {
            let t = rng.random_range(1..6);
            let states = (0..t)
                .map(|_| {
                    let c = &centers[rng.random_range(0..5)];
                    StateVector(c.iter().map(|v| v + rng.random_range(-0.4..0.4)).collect())
                })
                .collect();
            let l = rng.random_range(0..3);
            Trace::new(format!("t{i}"), states, Some(l), Some(l))
        })
        .collect();
    TraceSet::with_label_count(traces, 3, 3, Role::Training).unwrap()
}

#[test]
fn training_set_maps_without_new_states() {
    let training = planted_training(12);
    for method in [
        Method::Kmeans(KMeansParams::new(7, 3)),
        Method::Grid { cells_per_dim: 6, projection: ProjectionSpec::None },
        Method::Grid { cells_per_dim: 6, projection: ProjectionSpec::Pca(2) },
        Method::Grid { cells_per_dim: 6, projection: ProjectionSpec::Lda(2) },
    ] {
        let sm = extract(&training, &method).unwrap();
        let (mapped, created) = sm.map_suite(training.traces()).unwrap();
        assert_eq!(created, 0, "{method:?}");
        assert!(mapped.iter().all(|at| at.is_new.iter().all(|n| !n)));
        // Mapping reproduces the training counts.
        let mut finals = vec![vec![0u64; 3]; sm.basic_count()];
        for at in &mapped {
            finals[at.final_state.0][at.predicted_label.unwrap()] += 1;
        }
        assert_eq!(finals.as_slice(), sm.histograms());
        let (again, _) = sm.map_suite(training.traces()).unwrap();
        assert_eq!(mapped, again);
    }
}

#[test]
fn grid_registers_new_cells() {
    let points: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, (i * i) as f64 / 10.0]).collect();
    let geometry = fit_grid(&points, 4).unwrap();
    let traces: Vec<Trace> = points
        .iter()
        .map(|p| Trace::new("t", vec![StateVector(p.clone())], Some(0), Some(0)))
        .collect();
    let set = TraceSet::with_label_count(traces, 2, 2, Role::Training).unwrap();
    let mut sm = build_sm(Discretizer::grid(geometry), &set).unwrap();
    let n = sm.basic_count();
    let out = Trace::new("o", vec![sv(&[30.0, 30.0]), sv(&[30.1, 30.1]), sv(&[-40.0, 0.0])], Some(0), None);
    let at = sm.map_trace(&out, true).unwrap();
    assert_eq!(at.state_ids, vec![StateId(n), StateId(n), StateId(n + 1)]);
    assert_eq!(sm.dynamic().len(), 2);
}

#[test]
fn artifact_round_trip_on_disk() {
    let training = planted_training(13);
    let tmp = tempfile::tempdir().unwrap();
    for (i, method) in [
        Method::Kmeans(KMeansParams::new(6, 1)),
        Method::Grid { cells_per_dim: 5, projection: ProjectionSpec::Pca(2) },
    ]
    .iter()
    .enumerate()
    {
        let sm = extract(&training, method).unwrap();
        let path = tmp.path().join(format!("sm{i}.json"));
        sm.save(&path).unwrap();
        let back = StateMachine::load(&path).unwrap();
        assert_eq!(back.to_json().unwrap(), sm.to_json().unwrap());
        assert_eq!(back.histograms(), sm.histograms());
        assert_eq!(back.transitions(), sm.transitions());
        assert_eq!(back.discretizer(), sm.discretizer());
        assert_eq!(back.metadata, sm.metadata);
    }
    assert!(StateMachine::from_json("{\"version\": 2}").is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn lloyd_invariants(seed in any::<u64>(), n in 5usize..60, k in 1usize..6, dim in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let points = random_points(&mut rng, n, dim);
        let k = k.min(n);
        let fit = fit_kmeans(&points, &KMeansParams::new(k, seed)).unwrap();
        prop_assert!(fit.inertia_history.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12) + 1e-12));
        let c = &fit.geometry.centroids;
        for (p, &a) in points.iter().zip(&fit.assignments) {
            let da = squared_distance(p, &c[a]);
            for (j, other) in c.iter().enumerate() {
                let dj = squared_distance(p, other);
                prop_assert!(da < dj || (da == dj && a <= j) || da <= dj);
            }
        }
        prop_assert!(fit.geometry.radii.iter().all(|r| *r > 0.0 && r.is_finite()));
        if k == 1 {
            let m = mean_of(&points);
            for (a, b) in c[0].iter().zip(&m) {
                prop_assert!((a - b).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn transition_rows_are_distributions(seed in any::<u64>()) {
        let inst = random_coverage_instance(seed);
        let sm = &inst.sm;
        let n = sm.basic_count();
        for s in 0..n {
            let row: u64 = (0..n).map(|t| sm.transition_count(StateId(s), StateId(t))).sum();
            prop_assert_eq!(row, sm.outgoing(StateId(s)));
            let p: f64 = (0..n).map(|t| sm.transition_prob(StateId(s), StateId(t))).sum();
            if row > 0 {
                prop_assert!((p - 1.0).abs() < 1e-12);
            } else {
                prop_assert_eq!(p, 0.0);
            }
        }
        let finals: u64 = sm.histograms().iter().flatten().sum();
        prop_assert_eq!(finals, inst.training.len() as u64);
        let visits: u64 = sm.visits().iter().sum();
        prop_assert_eq!(visits, all_states(&inst.training).len() as u64);
    }
}
