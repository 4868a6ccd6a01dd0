use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How a gradient's weight shrinks with its staleness τ.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DampeningPolicy {
    /// `exp(-β τ)`, β fixed by the crossing with `1/(τ+1)` at `τ_thres / 2`.
    AdaSgdExponential,
    /// `1 / (τ + 1)`.
    DynSgdInverse,
    /// Staleness-unaware: always 1.
    Unit,
    /// Lockstep rounds; staleness never occurs.
    Synchronous,
}

/// Solves `1/(τ_thres/2 + 1) = exp(-β τ_thres/2)` for β.
pub fn beta_for(tau_thres: f64) -> Result<f64> {
    if !(tau_thres > 0.0) || !tau_thres.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "tau_thres must be positive, got {tau_thres}"
        )));
    }
    let half = tau_thres / 2.0;
    Ok((half + 1.0).ln() / half)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dampening {
    pub value: f64,
    /// The exponential policy had no usable τ_thres yet (bootstrap) and the
    /// inverse function was applied instead.
    pub fallback: bool,
}

pub fn dampening(policy: DampeningPolicy, tau: u64, tau_thres: Option<f64>) -> Dampening {
    let inverse = 1.0 / (tau as f64 + 1.0);
    match policy {
        DampeningPolicy::AdaSgdExponential => match tau_thres.map(beta_for) {
            Some(Ok(beta)) => Dampening {
                value: (-beta * tau as f64).exp(),
                fallback: false,
            },
            _ => Dampening {
                value: inverse,
                fallback: true,
            },
        },
        DampeningPolicy::DynSgdInverse => Dampening {
            value: inverse,
            fallback: false,
        },
        DampeningPolicy::Unit | DampeningPolicy::Synchronous => Dampening {
            value: 1.0,
            fallback: false,
        },
    }
}

/// `min(1, Λ / sim)`; a zero similarity saturates at the cap.
pub fn weight(lambda: f64, sim: f64) -> f64 {
    if sim <= 0.0 {
        1.0
    } else {
        (lambda / sim).min(1.0)
    }
}
