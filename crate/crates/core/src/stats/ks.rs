use serde::{Deserialize, Serialize};

use crate::error::{check_finite, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub d_statistic: f64,
    pub p_value: f64,
    pub n1: usize,
    pub n2: usize,
}

/// Supremum distance between the empirical CDFs, by a merge scan over the
/// sorted samples. Tied values advance both sides before comparing.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::invalid("KS test needs two non-empty samples"));
    }
    check_finite(a, || "KS sample".into())?;
    check_finite(b, || "KS sample".into())?;
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (n1, n2) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n1 - j as f64 / n2).abs());
    }
    Ok(d)
}

/// Kolmogorov survival function Q(λ) = 2 Σ (−1)^{k−1} exp(−2k²λ²).
///
/// For small λ the alternating series converges slowly and cancels badly,
/// so the equivalent theta-function form is used there.
pub fn kolmogorov_q(lambda: f64) -> f64 {
    if !(lambda > 0.0) {
        return 1.0;
    }
    let q = if lambda < 1.18 {
        let pi2 = std::f64::consts::PI.powi(2);
        let mut sum = 0.0;
        for k in 1..=100 {
            let m = (2 * k - 1) as f64;
            let term = (-(m * m) * pi2 / (8.0 * lambda * lambda)).exp();
            sum += term;
            if term < 1e-10 {
                break;
            }
        }
        1.0 - (2.0 * std::f64::consts::PI).sqrt() / lambda * sum
    } else {
        let mut sum = 0.0;
        let mut sign = 1.0;
        for k in 1..=100 {
            let kf = k as f64;
            let term = (-2.0 * kf * kf * lambda * lambda).exp();
            sum += sign * term;
            if term < 1e-10 {
                break;
            }
            sign = -sign;
        }
        2.0 * sum
    };
    q.clamp(0.0, 1.0)
}

/// Two-sample KS test with the asymptotic p-value and the
/// (√nₑ + 0.12 + 0.11/√nₑ) small-sample correction.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<KsResult> {
    let d = ks_statistic(a, b)?;
    let (n1, n2) = (a.len(), b.len());
    let ne = (n1 * n2) as f64 / (n1 + n2) as f64;
    let sq = ne.sqrt();
    let lambda = (sq + 0.12 + 0.11 / sq) * d;
    Ok(KsResult {
        d_statistic: d,
        p_value: kolmogorov_q(lambda),
        n1,
        n2,
    })
}
