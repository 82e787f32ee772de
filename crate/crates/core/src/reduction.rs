//! PCA and LDA projections.
//!
//! Both produce an affine map `v ↦ basis · (v − mean)`. PCA rows are the
//! leading eigenvectors of the sample covariance. LDA rows are the leading
//! generalized eigenvectors of the between-class scatter against the
//! (ridge-regularized) within-class scatter, scaled to unit length.
//!
//! Every basis row is sign-normalized so its largest-magnitude entry is
//! positive, which makes fits reproducible.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProjectionKind {
    Pca,
    Lda,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Projection {
    pub kind: ProjectionKind,
    pub mean: Vec<f64>,
    /// `k × D`, one direction per row.
    pub basis: Vec<Vec<f64>>,
    /// PCA: variance along each row. LDA: discriminant ratio of each row.
    pub eigenvalues: Vec<f64>,
    /// PCA: trace of the covariance. LDA: unused (0).
    pub total_variance: f64,
}

impl Projection {
    pub fn input_dim(&self) -> usize {
        self.mean.len()
    }

    pub fn output_dim(&self) -> usize {
        self.basis.len()
    }

    pub fn project(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                context: "projection input".into(),
                expected: self.input_dim(),
                actual: v.len(),
            });
        }
        Ok(self
            .basis
            .iter()
            .map(|row| {
                row.iter()
                    .zip(v.iter().zip(&self.mean))
                    .map(|(b, (x, m))| b * (x - m))
                    .sum()
            })
            .collect())
    }

    /// Map a projected point back into the input space (`mean + basisᵀ y`).
    /// Exact inverse on the span only for orthonormal (PCA) bases.
    pub fn reconstruct(&self, y: &[f64]) -> Vec<f64> {
        let mut out = self.mean.clone();
        for (row, coef) in self.basis.iter().zip(y) {
            for (o, b) in out.iter_mut().zip(row) {
                *o += coef * b;
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.input_dim();
        if self.basis.is_empty() || self.basis.len() > d {
            return Err(Error::invalid(format!(
                "projection output dimension {} outside 1..={d}",
                self.basis.len()
            )));
        }
        for row in &self.basis {
            if row.len() != d {
                return Err(Error::DimensionMismatch {
                    context: "projection basis row".into(),
                    expected: d,
                    actual: row.len(),
                });
            }
            crate::error::check_finite(row, || "projection basis".into())?;
        }
        crate::error::check_finite(&self.mean, || "projection mean".into())
    }
}

/// Mean squared distance between points and their PCA reconstructions.
pub fn reconstruction_error(p: &Projection, points: &[Vec<f64>]) -> Result<f64> {
    if points.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for v in points {
        let back = p.reconstruct(&p.project(v)?);
        total += back.iter().zip(v).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
    }
    Ok(total / points.len() as f64)
}

fn to_matrix(points: &[Vec<f64>]) -> Result<(DMatrix<f64>, usize)> {
    let d = points.first().map_or(0, Vec::len);
    if d == 0 {
        return Err(Error::invalid("points must have positive dimension"));
    }
    for p in points {
        if p.len() != d {
            return Err(Error::DimensionMismatch {
                context: "projection fit input".into(),
                expected: d,
                actual: p.len(),
            });
        }
        crate::error::check_finite(p, || "projection fit input".into())?;
    }
    Ok((
        DMatrix::from_row_iterator(points.len(), d, points.iter().flatten().copied()),
        d,
    ))
}

fn column_mean(x: &DMatrix<f64>) -> DVector<f64> {
    let n = x.nrows() as f64;
    DVector::from_iterator(x.ncols(), x.column_iter().map(|c| c.sum() / n))
}

fn sign_normalize(v: &mut [f64]) {
    let mut idx = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[idx].abs() {
            idx = i;
        }
    }
    if v[idx] < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

/// Eigenpairs of a symmetric matrix, eigenvalue-descending (ties keep index order).
fn sorted_eigen(m: DMatrix<f64>) -> Vec<(f64, Vec<f64>)> {
    let eig = SymmetricEigen::new(m);
    let mut pairs: Vec<(f64, Vec<f64>)> = eig
        .eigenvalues
        .iter()
        .zip(eig.eigenvectors.column_iter())
        .map(|(&val, vec)| (val, vec.iter().copied().collect()))
        .collect();
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
    pairs
}

/// Sample covariance (divisor `n − 1`).
pub fn covariance(points: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    if points.len() < 2 {
        return Err(Error::invalid("covariance needs at least 2 points"));
    }
    let (x, _) = to_matrix(points)?;
    let mean = column_mean(&x);
    let mut centered = x;
    for mut row in centered.row_iter_mut() {
        row -= mean.transpose();
    }
    Ok(centered.transpose() * &centered / (points.len() as f64 - 1.0))
}

pub fn fit_pca(points: &[Vec<f64>], k: usize) -> Result<Projection> {
    if points.len() < 2 {
        return Err(Error::invalid("PCA needs at least 2 points"));
    }
    let (x, d) = to_matrix(points)?;
    if k == 0 || k > d {
        return Err(Error::invalid(format!("PCA output dimension {k} outside 1..={d}")));
    }
    let mean = column_mean(&x);
    let cov = covariance(points)?;
    let total_variance = cov.trace();
    let pairs = sorted_eigen(cov);
    let mut basis = Vec::with_capacity(k);
    let mut eigenvalues = Vec::with_capacity(k);
    for (val, mut vec) in pairs.into_iter().take(k) {
        sign_normalize(&mut vec);
        basis.push(vec);
        eigenvalues.push(val.max(0.0));
    }
    Ok(Projection {
        kind: ProjectionKind::Pca,
        mean: mean.iter().copied().collect(),
        basis,
        eigenvalues,
        total_variance,
    })
}

/// Fisher LDA fitted on labelled points (typically final states with their
/// predicted labels).
pub fn fit_lda(points: &[Vec<f64>], labels: &[usize], k: usize) -> Result<Projection> {
    if points.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            context: "LDA labels".into(),
            expected: points.len(),
            actual: labels.len(),
        });
    }
    let (x, d) = to_matrix(points)?;
    let mut classes: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        classes.entry(l).or_default().push(i);
    }
    if classes.len() < 2 {
        return Err(Error::invalid("LDA needs points from at least 2 classes"));
    }
    let max_k = d.min(classes.len() - 1);
    if k == 0 || k > max_k {
        return Err(Error::invalid(format!(
            "LDA output dimension {k} outside 1..={max_k} (D={d}, classes={})",
            classes.len()
        )));
    }
    let mean = column_mean(&x);
    let mut within = DMatrix::<f64>::zeros(d, d);
    let mut between = DMatrix::<f64>::zeros(d, d);
    for members in classes.values() {
        let class_mean = DVector::from_iterator(
            d,
            (0..d).map(|j| members.iter().map(|&i| x[(i, j)]).sum::<f64>() / members.len() as f64),
        );
        for &i in members {
            let diff = x.row(i).transpose() - &class_mean;
            within += &diff * diff.transpose();
        }
        let shift = &class_mean - &mean;
        between += (&shift * shift.transpose()) * members.len() as f64;
    }
    let eps = 1e-6 * within.trace() / d as f64;
    for j in 0..d {
        within[(j, j)] += eps;
    }
    let chol = within
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Singular("within-class scatter is singular".into()))?;
    let l = chol.l();
    let l_inv = l
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Singular("within-class scatter factor".into()))?;
    // Symmetric whitened problem: L⁻¹ S_b L⁻ᵀ y = λ y, w = L⁻ᵀ y.
    let whitened = &l_inv * &between * l_inv.transpose();
    let whitened = (&whitened + whitened.transpose()) * 0.5;
    let pairs = sorted_eigen(whitened);
    let mut basis = Vec::with_capacity(k);
    let mut eigenvalues = Vec::with_capacity(k);
    for (val, y) in pairs.into_iter().take(k) {
        let w = l_inv.transpose() * DVector::from_vec(y);
        let norm = w.norm();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(Error::Singular("degenerate discriminant direction".into()));
        }
        let mut row: Vec<f64> = w.iter().map(|v| v / norm).collect();
        sign_normalize(&mut row);
        basis.push(row);
        eigenvalues.push(val.max(0.0));
    }
    Ok(Projection {
        kind: ProjectionKind::Lda,
        mean: mean.iter().copied().collect(),
        basis,
        eigenvalues,
        total_variance: 0.0,
    })
}
