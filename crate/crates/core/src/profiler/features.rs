use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// What a device reports about itself when asking for work.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceFeatures {
    /// MB.
    pub avail_mem: f64,
    /// MB.
    pub total_mem: f64,
    /// °C.
    pub temperature: f64,
    /// Sum of per-core maximum frequencies, MHz.
    pub cpu_freq_sum: f64,
    /// Energy units per non-idle CPU second. Only the energy predictor uses it.
    pub energy_per_cpu_time: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PredictorKind {
    Time,
    Energy,
}

impl PredictorKind {
    /// Length of the feature vector including the bias.
    pub fn dim(self) -> usize {
        match self {
            PredictorKind::Time => 5,
            PredictorKind::Energy => 6,
        }
    }
}

impl DeviceFeatures {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.avail_mem,
            self.total_mem,
            self.temperature,
            self.cpu_freq_sum,
            self.energy_per_cpu_time,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("device features"));
        }
        if !(self.total_mem >= self.avail_mem && self.avail_mem >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "memory must satisfy total ≥ available ≥ 0 (got {} / {})",
                self.total_mem, self.avail_mem
            )));
        }
        Ok(())
    }

    /// Raw features used by `kind`, without the bias.
    pub fn raw(&self, kind: PredictorKind) -> Vec<f64> {
        let mut v = vec![
            self.avail_mem,
            self.total_mem,
            self.temperature,
            self.cpu_freq_sum,
        ];
        if kind == PredictorKind::Energy {
            v.push(self.energy_per_cpu_time);
        }
        v
    }
}

/// Per-feature z-scoring with statistics frozen at construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    mean: [f64; 5],
    scale: [f64; 5],
}

impl Default for Standardizer {
    fn default() -> Self {
        Standardizer::identity()
    }
}

impl Standardizer {
    pub fn identity() -> Self {
        Standardizer {
            mean: [0.0; 5],
            scale: [1.0; 5],
        }
    }

    /// Constant columns keep a unit scale.
    pub fn fit<'a>(samples: impl IntoIterator<Item = &'a DeviceFeatures>) -> Self {
        let rows: Vec<[f64; 5]> = samples
            .into_iter()
            .map(|f| {
                [
                    f.avail_mem,
                    f.total_mem,
                    f.temperature,
                    f.cpu_freq_sum,
                    f.energy_per_cpu_time,
                ]
            })
            .collect();
        if rows.is_empty() {
            return Standardizer::identity();
        }
        let n = rows.len() as f64;
        let mut mean = [0.0; 5];
        for r in &rows {
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut scale = [0.0; 5];
        for r in &rows {
            for j in 0..5 {
                scale[j] += (r[j] - mean[j]).powi(2);
            }
        }
        for s in scale.iter_mut() {
            let sd = (*s / n).sqrt();
            *s = if sd > 1e-12 { sd } else { 1.0 };
        }
        Standardizer { mean, scale }
    }

    /// Standardized features for `kind` followed by a constant 1.0 bias.
    pub fn transform(&self, x: &DeviceFeatures, kind: PredictorKind) -> Vec<f64> {
        let mut v: Vec<f64> = x
            .raw(kind)
            .into_iter()
            .enumerate()
            .map(|(j, r)| (r - self.mean[j]) / self.scale[j])
            .collect();
        v.push(1.0);
        v
    }
}
