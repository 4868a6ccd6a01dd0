use crate::error::{Error, Result};

use super::GradientResult;

/// Normalised label histogram. The all-zero vector is the distinguished
/// empty distribution, used before any label has been seen.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelDistribution {
    probs: Vec<f64>,
}

impl LabelDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::InvalidArgument(
                "label probabilities must lie in [0, 1]".into(),
            ));
        }
        let sum: f64 = probs.iter().sum();
        if sum != 0.0 && (sum - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidArgument(format!(
                "label probabilities sum to {sum}, expected 1"
            )));
        }
        Ok(LabelDistribution { probs })
    }

    pub fn empty(len: usize) -> Self {
        LabelDistribution {
            probs: vec![0.0; len],
        }
    }

    pub fn from_counts(counts: &[u64]) -> Self {
        let total: u64 = counts.iter().sum();
        if total == 0 {
            return Self::empty(counts.len());
        }
        let total = total as f64;
        LabelDistribution {
            probs: counts.iter().map(|&c| c as f64 / total).collect(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.probs.iter().all(|&p| p == 0.0)
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }
}

/// Bhattacharyya coefficient `Σ sqrt(p_i q_i)`, clamped to `[0, 1]`.
/// Zero when either side is the empty distribution.
pub fn bhattacharyya(p: &LabelDistribution, q: &LabelDistribution) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::DimensionMismatch {
            what: "label distribution",
            expected: p.len(),
            found: q.len(),
        });
    }
    if p.is_empty() || q.is_empty() {
        return Ok(0.0);
    }
    let bc: f64 = p
        .probs
        .iter()
        .zip(&q.probs)
        .map(|(a, b)| (a * b).sqrt())
        .sum();
    Ok(bc.clamp(0.0, 1.0))
}

/// Overlap between a result's label counts and the global consumed counts.
pub fn similarity(result: &GradientResult, global_counts: &[u64]) -> Result<f64> {
    if result.batch_size == 0 {
        return Err(Error::InvalidArgument("result has batch_size 0".into()));
    }
    bhattacharyya(
        &LabelDistribution::from_counts(&result.label_counts),
        &LabelDistribution::from_counts(global_counts),
    )
}
