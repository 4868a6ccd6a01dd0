use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

use super::GradientResult;

/// Clip the gradient to L2 norm `clip_norm`, then add i.i.d. Gaussian noise
/// with standard deviation `sigma * clip_norm` to every component.
pub fn perturb<R: Rng + ?Sized>(
    result: &GradientResult,
    clip_norm: f64,
    sigma: f64,
    rng: &mut R,
) -> Result<GradientResult> {
    if !(clip_norm > 0.0) {
        return Err(Error::InvalidArgument("clip_norm must be positive".into()));
    }
    if !(sigma >= 0.0) {
        return Err(Error::InvalidArgument("sigma must be non-negative".into()));
    }
    let mut out = result.clone();
    let norm = out.grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > clip_norm {
        let scale = clip_norm / norm;
        out.grad.iter_mut().for_each(|g| *g *= scale);
    }
    if sigma > 0.0 {
        let noise = Normal::new(0.0, sigma * clip_norm)
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
        for g in out.grad.iter_mut() {
            *g += noise.sample(rng);
        }
    }
    Ok(out)
}
