use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::features::PredictorKind;
use super::pa::dot;

pub const DEFAULT_RIDGE: f64 = 1e-8;

/// A linear coefficient predictor α̂ = x·θ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearCoefModel {
    pub theta: Vec<f64>,
    pub kind: PredictorKind,
}

impl LinearCoefModel {
    pub fn zeros(kind: PredictorKind) -> Self {
        LinearCoefModel {
            theta: vec![0.0; kind.dim()],
            kind,
        }
    }

    /// Unclamped prediction.
    pub fn predict(&self, x: &[f64]) -> f64 {
        dot(&self.theta, x)
    }
}

/// Least squares through the normal equations (XᵀX + ridge·I)θ = Xᵀy.
/// Accumulation runs in row order so refits on the same rows are bitwise
/// identical.
pub fn ols_fit(rows: &[Vec<f64>], targets: &[f64], ridge: f64) -> Result<Vec<f64>> {
    if rows.len() != targets.len() {
        return Err(Error::DimensionMismatch {
            what: "OLS targets",
            expected: rows.len(),
            found: targets.len(),
        });
    }
    let Some(d) = rows.first().map(Vec::len) else {
        return Err(Error::InvalidArgument("OLS needs at least one row".into()));
    };
    if !(ridge >= 0.0) {
        return Err(Error::InvalidArgument("ridge must be non-negative".into()));
    }
    let mut xtx = DMatrix::<f64>::zeros(d, d);
    let mut xty = DVector::<f64>::zeros(d);
    for (row, &y) in rows.iter().zip(targets) {
        if row.len() != d {
            return Err(Error::DimensionMismatch {
                what: "OLS row",
                expected: d,
                found: row.len(),
            });
        }
        for i in 0..d {
            xty[i] += row[i] * y;
            for j in 0..d {
                xtx[(i, j)] += row[i] * row[j];
            }
        }
    }
    for i in 0..d {
        xtx[(i, i)] += ridge;
    }
    if ridge == 0.0 {
        let sv = xtx.clone().singular_values();
        let max = sv.max();
        if !(max > 0.0) || sv.min() <= max * 1e-12 {
            return Err(Error::Singular);
        }
    }
    let chol = xtx.cholesky().ok_or(Error::Singular)?;
    let theta = chol.solve(&xty);
    if theta.iter().any(|t| !t.is_finite()) {
        return Err(Error::Singular);
    }
    Ok(theta.iter().copied().collect())
}
