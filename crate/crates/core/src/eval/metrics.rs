//! Prediction-quality metrics and the subspace-recovery diagnostic.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ridge::require_orthonormal;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Auc,
    ZeroOne,
    Mse,
}

impl std::fmt::Display for Metric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Metric::Auc => "auc",
            Metric::ZeroOne => "zero_one",
            Metric::Mse => "mse",
        })
    }
}

/// Area under the ROC curve via the Mann–Whitney statistic, with half credit
/// for tied scores. Labels must be ±1 with both classes present.
pub fn auc(scores: &[f64], labels: &[f64]) -> Result<f64> {
    if scores.len() != labels.len() || scores.is_empty() {
        return Err(Error::DimensionMismatch(format!(
            "{} scores vs {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if labels.iter().any(|&l| l != 1.0 && l != -1.0) {
        return Err(Error::InvalidData("labels must be ±1".into()));
    }
    let n_pos = labels.iter().filter(|&&l| l == 1.0).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::InvalidData("AUC needs both classes present".into()));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::InvalidData("scores must be finite".into()));
    }
    // Average ranks over tie groups, then the rank-sum statistic.
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&i, &j| scores[i].partial_cmp(&scores[j]).unwrap());
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // ranks are 1-based; the tied block [i, j] shares the average rank
        let avg_rank = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            if labels[idx] == 1.0 {
                rank_sum_pos += avg_rank;
            }
        }
        i = j + 1;
    }
    let n_pos_f = n_pos as f64;
    Ok((rank_sum_pos - n_pos_f * (n_pos_f + 1.0) / 2.0) / (n_pos_f * n_neg as f64))
}

/// Mean 0/1 error of thresholded scores (ties predict +1).
pub fn zero_one(scores: &[f64], labels: &[f64]) -> Result<f64> {
    if scores.len() != labels.len() || scores.is_empty() {
        return Err(Error::DimensionMismatch(format!(
            "{} scores vs {} labels",
            scores.len(),
            labels.len()
        )));
    }
    let errors = scores
        .iter()
        .zip(labels)
        .filter(|(&s, &l)| {
            let pred = if s >= 0.0 { 1.0 } else { -1.0 };
            pred != l
        })
        .count();
    Ok(errors as f64 / labels.len() as f64)
}

/// Mean squared error, multiplied by `scale²` to undo label scaling.
pub fn mse(preds: &[f64], targets: &[f64], scale: f64) -> Result<f64> {
    if preds.len() != targets.len() || preds.is_empty() {
        return Err(Error::DimensionMismatch(format!(
            "{} predictions vs {} targets",
            preds.len(),
            targets.len()
        )));
    }
    let sum: f64 = preds
        .iter()
        .zip(targets)
        .map(|(&p, &t)| (p - t) * (p - t))
        .sum();
    Ok(sum / preds.len() as f64 * scale * scale)
}

/// Principal angles between the column spans of two orthonormal bases:
/// arccos of the singular values of MᵀB, nondecreasing, in [0, π/2].
pub fn principal_angles(m: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<Vec<f64>> {
    if m.nrows() != b.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "ambient dimensions differ: {} vs {}",
            m.nrows(),
            b.nrows()
        )));
    }
    require_orthonormal(m, 1e-8, "principal angles (first basis)")?;
    require_orthonormal(b, 1e-8, "principal angles (second basis)")?;
    let cross = m.transpose() * b;
    let svd = cross.svd(false, false);
    let mut angles: Vec<f64> = svd
        .singular_values
        .iter()
        .map(|&s| s.clamp(0.0, 1.0).acos())
        .collect();
    angles.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(angles)
}
