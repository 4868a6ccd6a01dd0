use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::state::{bound_from_alphas, LogEntry};

/// Through-origin least squares y ≈ θ0·n over (n, y) pairs.
pub fn maui_fit(pairs: &[(f64, f64)]) -> Result<f64> {
    let (mut ny, mut nn) = (0.0, 0.0);
    for &(n, y) in pairs {
        ny += n * y;
        nn += n * n;
    }
    if !(nn > 0.0) {
        return Err(Error::InvalidArgument(
            "MAUI fit needs a non-zero batch size".into(),
        ));
    }
    Ok(ny / nn)
}

pub fn maui_predict(theta0: f64, n: f64) -> f64 {
    theta0 * n
}

/// Batch-size bound from the global coefficients, with the same clamping as
/// the feature-based predictor.
pub fn maui_bound(theta_time: f64, theta_energy: f64, t_slo: f64, e_slo: f64) -> u64 {
    bound_from_alphas(theta_time, theta_energy, t_slo, e_slo)
}

/// Running sums for the device-blind baseline. Identical to refitting
/// [`maui_fit`] over every observation so far.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MauiState {
    sum_nn: f64,
    sum_nt: f64,
    sum_ne: f64,
    observations: u64,
}

impl MauiState {
    pub fn observe(&mut self, n: u64, t_comp: f64, energy: f64) -> Result<()> {
        if n == 0 {
            return Err(Error::InvalidArgument("batch size must be positive".into()));
        }
        let n = n as f64;
        self.sum_nn += n * n;
        self.sum_nt += n * t_comp;
        self.sum_ne += n * energy;
        self.observations += 1;
        Ok(())
    }

    /// Accumulates a profiling log, reconstructing each task's totals from
    /// its batch size and per-sample coefficients.
    pub fn from_log(log: &[LogEntry]) -> Result<Self> {
        let mut m = MauiState::default();
        for e in log {
            let n = e.samples as f64;
            m.observe(e.samples, e.alpha_time * n, e.alpha_energy * n)?;
        }
        Ok(m)
    }

    pub fn observations(&self) -> u64 {
        self.observations
    }

    /// (θ0_time, θ0_energy), zero before any observation.
    pub fn coefficients(&self) -> (f64, f64) {
        if self.sum_nn > 0.0 {
            (self.sum_nt / self.sum_nn, self.sum_ne / self.sum_nn)
        } else {
            (0.0, 0.0)
        }
    }

    pub fn predict_bound(&self, t_slo: f64, e_slo: f64) -> u64 {
        let (t, e) = self.coefficients();
        maui_bound(t, e, t_slo, e_slo)
    }
}
