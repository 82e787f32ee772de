use serde::{Deserialize, Serialize};

use crate::error::{check_finite, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    /// `(fpr, tpr)` from (0, 0) to (1, 1).
    pub points: Vec<(f64, f64)>,
    /// Distinct scores, descending; point `i + 1` classifies `score ≥ thresholds[i]` as positive.
    pub thresholds: Vec<f64>,
    pub auc: f64,
}

/// ROC curve and its trapezoidal area. Tied scores share one point, so the
/// area equals the Mann–Whitney statistic with half credit for ties.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<RocCurve> {
    if scores.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            context: "scores vs labels".into(),
            expected: scores.len(),
            actual: labels.len(),
        });
    }
    check_finite(scores, || "ROC scores".into())?;
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::invalid("ROC needs both positive and negative labels"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&i, &j| scores[j].total_cmp(&scores[i]));

    let mut points = vec![(0.0, 0.0)];
    let mut thresholds = Vec::new();
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut area = 0.0;
    let mut k = 0;
    while k < order.len() {
        let s = scores[order[k]];
        let (tp0, fp0) = (tp, fp);
        while k < order.len() && scores[order[k]] == s {
            if labels[order[k]] {
                tp += 1;
            } else {
                fp += 1;
            }
            k += 1;
        }
        // Trapezoid in count units; normalized once at the end.
        area += (fp - fp0) as f64 * (tp + tp0) as f64 / 2.0;
        thresholds.push(s);
        points.push((fp as f64 / neg as f64, tp as f64 / pos as f64));
    }
    Ok(RocCurve {
        points,
        thresholds,
        auc: area / (pos as f64 * neg as f64),
    })
}
