use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Passive-aggressive regressor with an ε-insensitive loss.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PaModel {
    pub theta: Vec<f64>,
    pub epsilon: f64,
    pub update_count: u64,
}

impl PaModel {
    pub fn new(theta: Vec<f64>, epsilon: f64) -> Self {
        PaModel {
            theta,
            epsilon,
            update_count: 0,
        }
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        dot(&self.theta, x)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// One PA step. Returns the loss before the update; theta moves only when it
/// is positive, and then lands exactly ε away from `alpha`.
pub fn pa_update(model: &mut PaModel, x: &[f64], alpha: f64) -> Result<f64> {
    if x.len() != model.theta.len() {
        return Err(Error::DimensionMismatch {
            what: "PA features",
            expected: model.theta.len(),
            found: x.len(),
        });
    }
    let norm_sq = dot(x, x);
    if !(norm_sq > 0.0) {
        return Err(Error::InvalidArgument("zero feature vector".into()));
    }
    if !alpha.is_finite() {
        return Err(Error::NonFinite("PA target"));
    }
    let pred = model.predict(x);
    let loss = ((pred - alpha).abs() - model.epsilon).max(0.0);
    if loss > 0.0 {
        let step = loss / norm_sq * (alpha - pred).signum();
        for (t, xi) in model.theta.iter_mut().zip(x) {
            *t += step * xi;
        }
        model.update_count += 1;
    }
    Ok(loss)
}
