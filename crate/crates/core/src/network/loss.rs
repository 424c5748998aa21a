//! Class-weighted cross-entropy over per-point selection probabilities.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::layers::{real, Real};
use super::model::selected_probability;
use crate::error::{Error, Result};

pub const PROB_CLAMP: f64 = 1e-7;

/// Class weights `(θ0, θ1)` applied to selected and unselected points.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassWeights {
    pub selected: f64,
    pub unselected: f64,
}

impl Default for ClassWeights {
    fn default() -> Self {
        ClassWeights {
            selected: 1.0,
            unselected: 1.0,
        }
    }
}

/// Mean weighted cross-entropy and its gradient with respect to the logits.
///
/// `labels[i]` is true when point `i` belongs to the target. Probabilities are
/// clamped to `[1e-7, 1 - 1e-7]`; clamped points contribute no gradient.
pub fn weighted_cross_entropy<T: Real>(
    logits: &Array2<T>,
    labels: &[bool],
    weights: ClassWeights,
) -> Result<(f64, Array2<T>)> {
    if logits.nrows() != labels.len() {
        return Err(Error::LengthMismatch {
            left: logits.nrows(),
            right: labels.len(),
        });
    }
    if logits.ncols() != 2 {
        return Err(Error::ShapeMismatch(format!(
            "expected 2 logits per point, got {}",
            logits.ncols()
        )));
    }
    let n = labels.len().max(1) as f64;
    let mut total = 0.0;
    let mut grad = Array2::<T>::zeros(logits.raw_dim());
    for (i, (row, &s)) in logits.rows().into_iter().zip(labels).enumerate() {
        let z0 = row[0].to_f64().unwrap_or(f64::NAN);
        let z1 = row[1].to_f64().unwrap_or(f64::NAN);
        let rho = selected_probability(z0, z1);
        let clamped = rho.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
        let d_rho = if s {
            total -= weights.selected * clamped.ln();
            -weights.selected / clamped
        } else {
            total -= weights.unselected * (1.0 - clamped).ln();
            weights.unselected / (1.0 - clamped)
        };
        if clamped == rho {
            let dz1 = d_rho * rho * (1.0 - rho) / n;
            grad[[i, 1]] = real(dz1);
            grad[[i, 0]] = real(-dz1);
        }
    }
    Ok((total / n, grad))
}

/// Loss of already-computed selection probabilities.
pub fn cross_entropy(rho: &[f64], labels: &[bool], weights: ClassWeights) -> Result<f64> {
    if rho.len() != labels.len() {
        return Err(Error::LengthMismatch {
            left: rho.len(),
            right: labels.len(),
        });
    }
    let n = labels.len().max(1) as f64;
    let total: f64 = rho
        .iter()
        .zip(labels)
        .map(|(&r, &s)| {
            let r = r.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
            if s {
                -weights.selected * r.ln()
            } else {
                -weights.unselected * (1.0 - r).ln()
            }
        })
        .sum();
    Ok(total / n)
}
