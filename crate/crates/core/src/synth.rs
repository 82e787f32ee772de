//! Seeded generators of trace sets with planted structure.
//!
//! A [`PlantedSource`] is a Markov chain over fixed centers in state space.
//! A trace is a walk over the centers plus isotropic Gaussian noise: the
//! first center comes from `initial`, interior steps follow `transitions`
//! and the last step follows `exit_transitions`, so walks can be made to
//! end only at designated terminal centers. Labels are drawn from the final
//! center's label distribution and errors from an [`ErrorModel`].
//!
//! Suite families add perturbation: a perturbed walk either ends at a
//! center drawn from `transitions` instead of `exit_transitions` (usually a
//! non-terminal center, so a new final state), or has its final vector
//! displaced far from every center. Both count as off-manifold for the
//! error model.
//!
//! Every trace is generated from its own RNG seeded by mixing the source
//! seed, a stream tag and the trace's position, so output does not depend
//! on the number of worker threads.

use rand::distr::weighted::WeightedIndex;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Normal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trace::{Role, StateVector, Trace, TraceSet};

/// How an error shows up in the labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorPlacement {
    /// The prediction follows the final center; the true label is changed.
    Silent,
    /// The true label follows the final center; the prediction is changed.
    LabelFlip,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorModel {
    pub base_rate: f64,
    /// Centers whose dominant label probability is below this are impure.
    pub purity_threshold: f64,
    pub impure_boost: f64,
    pub off_manifold_boost: f64,
    pub placement: ErrorPlacement,
}

impl ErrorModel {
    /// Error probability, capped at 1.
    pub fn probability(&self, center_purity: f64, off_manifold: bool) -> f64 {
        let mut p = self.base_rate;
        if center_purity < self.purity_threshold {
            p *= self.impure_boost;
        }
        if off_manifold {
            p *= self.off_manifold_boost;
        }
        p.clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedSource {
    pub seed: u64,
    pub centers: Vec<Vec<f64>>,
    pub terminal: Vec<bool>,
    pub initial: Vec<f64>,
    pub transitions: Vec<Vec<f64>>,
    pub exit_transitions: Vec<Vec<f64>>,
    pub label_distributions: Vec<Vec<f64>>,
    pub labels: Vec<String>,
    pub noise_sigma: f64,
    /// Distance of displaced final vectors from their center.
    pub displacement: f64,
    pub error_model: ErrorModel,
}

/// Parameters for [`PlantedSource::random`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceConfig {
    pub dim: usize,
    pub transit_centers: usize,
    pub terminal_centers: usize,
    pub label_count: usize,
    pub noise_sigma: f64,
    /// Minimum distance between centers; raised to 8σ if smaller.
    pub separation: f64,
    /// Dominant-label probability of pure centers.
    pub purity: f64,
    /// Share of terminal centers that get `low_purity` instead.
    pub impure_fraction: f64,
    pub low_purity: f64,
    pub error_model: ErrorModel,
}

impl Default for SourceConfig {
    fn default() -> Self {
        SourceConfig {
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
        }
    }
}

/// Ground truth for one generated trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceTruth {
    pub id: String,
    pub centers: Vec<usize>,
    pub off_manifold: bool,
    pub displaced: bool,
    pub error: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthBundle {
    pub set: TraceSet,
    pub truth: Vec<TraceTruth>,
}

/// Sidecar written next to generated bundles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub source: PlantedSource,
    pub traces: Vec<TraceTruth>,
}

const STREAM_TRAINING: u64 = 0x7472_6169_6e00_0000;
const STREAM_SUITE: u64 = 0x7375_6974_6500_0000;
const STREAM_LAYOUT: u64 = 0x6c61_796f_7574_0000;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for one (stream, group, index) position.
pub fn derive_seed(seed: u64, stream: u64, group: u64, index: u64) -> u64 {
    splitmix(splitmix(splitmix(seed ^ stream) ^ group) ^ index)
}

fn check_distribution(row: &[f64], n: usize, what: &str) -> Result<()> {
    if row.len() != n {
        return Err(Error::invalid(format!("{what} has {} entries, expected {n}", row.len())));
    }
    if row.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
        return Err(Error::invalid(format!("{what} has a negative or non-finite entry")));
    }
    let s: f64 = row.iter().sum();
    if (s - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!("{what} sums to {s}, not 1")));
    }
    Ok(())
}

impl PlantedSource {
    pub fn dim(&self) -> usize {
        self.centers.first().map_or(0, Vec::len)
    }

    pub fn label_count(&self) -> usize {
        self.labels.len()
    }

    /// Probability of the dominant label at a center.
    pub fn purity(&self, center: usize) -> f64 {
        self.label_distributions[center]
            .iter()
            .copied()
            .fold(0.0, f64::max)
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.centers.len();
        let d = self.dim();
        if k == 0 || d == 0 {
            return Err(Error::invalid("source needs at least one center of positive dimension"));
        }
        if self.centers.iter().any(|c| c.len() != d) {
            return Err(Error::invalid("centers differ in dimension"));
        }
        for c in &self.centers {
            crate::error::check_finite(c, || "source center".into())?;
        }
        if self.labels.len() < 2 {
            return Err(Error::invalid("source needs at least 2 labels"));
        }
        if self.terminal.len() != k
            || self.transitions.len() != k
            || self.exit_transitions.len() != k
            || self.label_distributions.len() != k
        {
            return Err(Error::invalid("per-center tables must have one row per center"));
        }
        check_distribution(&self.initial, k, "initial distribution")?;
        for i in 0..k {
            check_distribution(&self.transitions[i], k, &format!("transition row {i}"))?;
            check_distribution(&self.exit_transitions[i], k, &format!("exit row {i}"))?;
            check_distribution(
                &self.label_distributions[i],
                self.labels.len(),
                &format!("label distribution {i}"),
            )?;
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::invalid("noise sigma must be finite and non-negative"));
        }
        if !(self.displacement.is_finite() && self.displacement >= 0.0) {
            return Err(Error::invalid("displacement must be finite and non-negative"));
        }
        let e = &self.error_model;
        if [e.base_rate, e.impure_boost, e.off_manifold_boost]
            .iter()
            .any(|v| !(v.is_finite() && *v >= 0.0))
            || e.base_rate > 1.0
        {
            return Err(Error::invalid("error model rates must be finite, non-negative, base rate ≤ 1"));
        }
        Ok(())
    }

    /// Random layout: transit centers form a Markov chain among themselves
    /// and exit to terminal centers; walks start at transit centers.
    pub fn random(config: &SourceConfig, seed: u64) -> Result<Self> {
        let k = config.transit_centers + config.terminal_centers;
        if config.dim == 0 || config.terminal_centers == 0 {
            return Err(Error::invalid("source needs a positive dimension and a terminal center"));
        }
        if config.label_count < 2 {
            return Err(Error::invalid("source needs at least 2 labels"));
        }
        if !(config.noise_sigma >= 0.0) {
            return Err(Error::invalid("noise sigma must be non-negative"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, STREAM_LAYOUT, 0, 0));
        let sep = config.separation.max(8.0 * config.noise_sigma);
        if !(sep > 0.0) {
            return Err(Error::invalid("center separation must be positive"));
        }
        // Cube side large enough to hold k well-separated points comfortably.
        let per_axis = (k as f64).powf(1.0 / config.dim as f64).ceil().max(1.0);
        let side = sep * (per_axis + 1.0) * 2.0;
        let mut centers: Vec<Vec<f64>> = Vec::with_capacity(k);
        let mut attempts = 0;
        while centers.len() < k {
            attempts += 1;
            if attempts > 100_000 {
                return Err(Error::invalid("could not place centers with the requested separation"));
            }
            let c: Vec<f64> = (0..config.dim).map(|_| rng.random_range(0.0..side)).collect();
            if centers
                .iter()
                .all(|o| crate::extract::kmeans::distance(o, &c) >= sep)
            {
                centers.push(c);
            }
        }

        let transit: Vec<usize> = (0..config.transit_centers).collect();
        let terminal_ids: Vec<usize> = (config.transit_centers..k).collect();
        let mut random_row = |support: &[usize]| -> Vec<f64> {
            let mut row = vec![0.0; k];
            let w: Vec<f64> = support.iter().map(|_| rng.random_range(0.5..1.5)).collect();
            let s: f64 = w.iter().sum();
            for (&j, wj) in support.iter().zip(&w) {
                row[j] = wj / s;
            }
            row
        };
        let starts: &[usize] = if transit.is_empty() { &terminal_ids } else { &transit };
        let mut initial = vec![0.0; k];
        for &j in starts {
            initial[j] = 1.0 / starts.len() as f64;
        }
        let transitions: Vec<Vec<f64>> = (0..k).map(|_| random_row(starts)).collect();
        let exit_transitions: Vec<Vec<f64>> = (0..k).map(|_| random_row(&terminal_ids)).collect();

        let l = config.label_count;
        let impure_count = (config.impure_fraction * config.terminal_centers as f64).round() as usize;
        let label_distributions = (0..k)
            .map(|i| {
                let (dominant, purity) = if i < config.transit_centers {
                    (i % l, config.purity)
                } else {
                    let t = i - config.transit_centers;
                    let p = if t < impure_count { config.low_purity } else { config.purity };
                    (t % l, p)
                };
                let rest = (1.0 - purity) / (l - 1) as f64;
                (0..l).map(|j| if j == dominant { purity } else { rest }).collect()
            })
            .collect();
        let source = PlantedSource {
            seed,
            terminal: (0..k).map(|i| i >= config.transit_centers).collect(),
            centers,
            initial,
            transitions,
            exit_transitions,
            label_distributions,
            labels: (0..l).map(|i| format!("class{i}")).collect(),
            noise_sigma: config.noise_sigma,
            // Farther than the cube diagonal, so a displaced vector clears every center.
            displacement: 3.0 * side * (config.dim as f64).sqrt(),
            error_model: config.error_model,
        };
        source.validate()?;
        Ok(source)
    }

    fn trace(
        &self,
        rng: &mut ChaCha8Rng,
        id: String,
        t_len: usize,
        noise_sigma: f64,
        perturbation: f64,
    ) -> Result<(Trace, TraceTruth)> {
        let pick = |rng: &mut ChaCha8Rng, row: &[f64]| -> Result<usize> {
            let dist = WeightedIndex::new(row)
                .map_err(|e| Error::invalid(format!("degenerate transition row: {e}")))?;
            Ok(dist.sample(rng))
        };
        let perturbed = perturbation > 0.0 && rng.random_bool(perturbation.min(1.0));
        let displaced = perturbed && rng.random_bool(0.5);
        let mut centers = Vec::with_capacity(t_len);
        let mut c = pick(rng, &self.initial)?;
        centers.push(c);
        for step in 1..t_len {
            let last = step + 1 == t_len;
            let row = if last && !(perturbed && !displaced) {
                &self.exit_transitions[c]
            } else {
                &self.transitions[c]
            };
            c = pick(rng, row)?;
            centers.push(c);
        }
        let final_center = c;
        let noise = Normal::new(0.0, noise_sigma)
            .map_err(|e| Error::invalid(format!("bad noise sigma: {e}")))?;
        let mut states: Vec<StateVector> = centers
            .iter()
            .map(|&ci| {
                StateVector(
                    self.centers[ci]
                        .iter()
                        .map(|&x| x + noise.sample(rng))
                        .collect(),
                )
            })
            .collect();
        if displaced {
            let dir: Vec<f64> = (0..self.dim()).map(|_| rng.sample(StandardNormal)).collect();
            let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
            let last = states.last_mut().expect("t_len ≥ 1");
            for (x, d) in last.0.iter_mut().zip(&dir) {
                *x += d / norm * self.displacement;
            }
        }
        let off_manifold = perturbed;
        let l = self.label_count();
        let center_label = pick(rng, &self.label_distributions[final_center])?;
        let p_err = self
            .error_model
            .probability(self.purity(final_center), off_manifold);
        let error = rng.random_bool(p_err);
        let other = |rng: &mut ChaCha8Rng, label: usize| -> usize {
            let j = rng.random_range(0..l - 1);
            if j >= label {
                j + 1
            } else {
                j
            }
        };
        let (predicted, truth) = match (self.error_model.placement, error) {
            (_, false) => (center_label, center_label),
            (ErrorPlacement::Silent, true) => (center_label, other(rng, center_label)),
            (ErrorPlacement::LabelFlip, true) => (other(rng, center_label), center_label),
        };
        Ok((
            Trace::new(id.clone(), states, Some(predicted), Some(truth)),
            TraceTruth {
                id,
                centers,
                off_manifold,
                displaced,
                error,
            },
        ))
    }

    fn batch(
        &self,
        stream: u64,
        group: u64,
        prefix: &str,
        n: usize,
        t_len: usize,
        noise_sigma: f64,
        perturbation: f64,
        role: Role,
    ) -> Result<SynthBundle> {
        if t_len == 0 {
            return Err(Error::invalid("trace length must be at least 1"));
        }
        if !(0.0..=1.0).contains(&perturbation) {
            return Err(Error::invalid("perturbation must lie in [0, 1]"));
        }
        self.validate()?;
        let pairs: Vec<(Trace, TraceTruth)> = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.seed, stream, group, i as u64));
                self.trace(&mut rng, format!("{prefix}{i}"), t_len, noise_sigma, perturbation)
            })
            .collect::<Result<_>>()?;
        let (traces, truth): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
        let set = TraceSet::new(traces, self.labels.clone(), self.dim(), role)?;
        Ok(SynthBundle { set, truth })
    }

    /// Unperturbed traces with the training role.
    pub fn generate(&self, n_traces: usize, t_len: usize, noise_sigma: f64) -> Result<SynthBundle> {
        self.batch(
            STREAM_TRAINING,
            0,
            "train-",
            n_traces,
            t_len,
            noise_sigma,
            0.0,
            Role::Training,
        )
    }

    /// Independent test suites; a `perturbation` share of each suite's walks
    /// is pushed off-manifold.
    pub fn generate_suite_family(
        &self,
        n_suites: usize,
        suite_size: usize,
        t_len: usize,
        perturbation: f64,
    ) -> Result<Vec<SynthBundle>> {
        (0..n_suites)
            .map(|s| {
                self.batch(
                    STREAM_SUITE,
                    s as u64,
                    &format!("s{s}-"),
                    suite_size,
                    t_len,
                    self.noise_sigma,
                    perturbation,
                    Role::Test,
                )
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_noise_hits_centers() {
        let src = PlantedSource::random(&SourceConfig::default(), 3).unwrap();
        let b = src.generate(20, 5, 0.0).unwrap();
        for (t, truth) in b.set.traces().iter().zip(&b.truth) {
            for (v, &c) in t.states.iter().zip(&truth.centers) {
                assert_eq!(v.0, src.centers[c]);
            }
            assert!(src.terminal[*truth.centers.last().unwrap()]);
        }
    }

    #[test]
    fn same_seed_same_bundle() {
        let src = PlantedSource::random(&SourceConfig::default(), 11).unwrap();
        let a = src.generate_suite_family(2, 30, 4, 0.3).unwrap();
        let b = src.generate_suite_family(2, 30, 4, 0.3).unwrap();
        assert_eq!(a, b);
        assert_ne!(a[0].set.traces()[0], a[1].set.traces()[0]);
    }

    #[test]
    fn centers_respect_separation() {
        let cfg = SourceConfig {
            noise_sigma: 1.0,
            separation: 0.5,
            ..SourceConfig::default()
        };
        let src = PlantedSource::random(&cfg, 5).unwrap();
        for i in 0..src.centers.len() {
            for j in 0..i {
                assert!(crate::extract::kmeans::distance(&src.centers[i], &src.centers[j]) >= 8.0);
            }
        }
    }

    #[test]
    fn degenerate_rows_rejected() {
        let mut src = PlantedSource::random(&SourceConfig::default(), 1).unwrap();
        src.transitions[0] = vec![0.0; src.centers.len()];
        assert!(src.generate(1, 3, 0.1).is_err());
    }

    #[test]
    fn error_probability_is_capped() {
        let m = ErrorModel {
            base_rate: 0.3,
            purity_threshold: 0.9,
            impure_boost: 5.0,
            off_manifold_boost: 5.0,
            placement: ErrorPlacement::Silent,
        };
        assert_eq!(m.probability(1.0, false), 0.3);
        assert_eq!(m.probability(0.5, true), 1.0);
    }
}
