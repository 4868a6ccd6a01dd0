use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Batch;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DriftConfig {
    pub num_classes: usize,
    pub dim: usize,
    /// Chunks per stationary epoch; `None` never drifts.
    pub drift_period: Option<u64>,
    pub samples_per_chunk: usize,
    /// Scale of the class centers.
    pub separation: f64,
    pub noise_std: f64,
    /// Fraction of the previous epoch's centers kept at each redraw (0 draws
    /// them afresh).
    pub persistence: f64,
}

impl Default for DriftConfig {
    fn default() -> Self {
        DriftConfig {
            num_classes: 5,
            dim: 20,
            drift_period: Some(12),
            samples_per_chunk: 200,
            separation: 1.0,
            noise_std: 1.0,
            persistence: 0.6,
        }
    }
}

impl DriftConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 || self.dim == 0 || self.samples_per_chunk == 0 {
            return Err(Error::InvalidArgument(
                "drifting stream needs ≥2 classes, dim ≥1 and non-empty chunks".into(),
            ));
        }
        if self.drift_period == Some(0) {
            return Err(Error::InvalidArgument(
                "drift_period must be positive".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.persistence) || !(self.noise_std >= 0.0) {
            return Err(Error::InvalidArgument(
                "persistence must lie in [0,1] and noise_std ≥ 0".into(),
            ));
        }
        Ok(())
    }
}

/// Gaussian-cluster classification chunks whose class centers move every
/// `drift_period` chunks.
#[derive(Debug, Clone)]
pub struct DriftingStream {
    config: DriftConfig,
    seed: u64,
    chunk: u64,
    epoch: u64,
    centers: Vec<f64>,
}

impl DriftingStream {
    pub fn new(config: DriftConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let centers = fresh(&config, seed, 0);
        Ok(DriftingStream {
            config,
            seed,
            chunk: 0,
            epoch: 0,
            centers,
        })
    }

    pub fn config(&self) -> &DriftConfig {
        &self.config
    }

    /// Index of the chunk the next call to [`Self::next_chunk`] returns.
    pub fn chunk_index(&self) -> u64 {
        self.chunk
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    pub fn next_chunk(&mut self) -> Result<Batch> {
        let c = &self.config;
        let epoch = c.drift_period.map_or(0, |p| self.chunk / p);
        while self.epoch < epoch {
            self.epoch += 1;
            let new = fresh(c, self.seed, self.epoch);
            let keep = c.persistence;
            let add = (1.0 - keep * keep).sqrt();
            for (old, n) in self.centers.iter_mut().zip(new) {
                *old = keep * *old + add * n;
            }
        }
        let mut r = rng::indexed_stream(self.seed, "drift/chunk", self.chunk);
        let mut features = Vec::with_capacity(c.samples_per_chunk * c.dim);
        let mut labels = Vec::with_capacity(c.samples_per_chunk);
        for _ in 0..c.samples_per_chunk {
            let y = r.random_range(0..c.num_classes);
            for j in 0..c.dim {
                let z: f64 = r.sample(StandardNormal);
                features.push(self.centers[y * c.dim + j] + c.noise_std * z);
            }
            labels.push(y);
        }
        self.chunk += 1;
        Batch::new(features, c.dim, labels)
    }
}

fn fresh(c: &DriftConfig, seed: u64, epoch: u64) -> Vec<f64> {
    let mut r = rng::indexed_stream(seed, "drift/centers", epoch);
    (0..c.num_classes * c.dim)
        .map(|_| c.separation * r.sample::<f64, _>(StandardNormal))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{evaluate, gradient, init_params, ModelSpec};

    fn train(stream: &mut DriftingStream, chunks: usize) -> crate::model::ModelParams {
        let c = *stream.config();
        let mut p = init_params(ModelSpec::softmax(c.dim, c.num_classes), 0).unwrap();
        for _ in 0..chunks {
            let b = stream.next_chunk().unwrap();
            for _ in 0..20 {
                let g = gradient(&p, &b).unwrap();
                p.step(&g, 0.5).unwrap();
            }
        }
        p
    }

    fn accuracy(p: &crate::model::ModelParams, b: &Batch) -> f64 {
        evaluate(p, b.features(), b.labels()).unwrap().accuracy
    }

    #[test]
    fn no_drift_limit_keeps_centers() {
        let cfg = DriftConfig {
            drift_period: None,
            ..DriftConfig::default()
        };
        let mut s = DriftingStream::new(cfg, 3).unwrap();
        let c0 = s.centers().to_vec();
        for _ in 0..50 {
            s.next_chunk().unwrap();
        }
        assert_eq!(c0, s.centers());
    }

    #[test]
    fn stationary_within_a_period_and_drops_at_the_boundary() {
        let cfg = DriftConfig {
            drift_period: Some(10),
            ..DriftConfig::default()
        };
        let mut s = DriftingStream::new(cfg, 5).unwrap();
        let p = train(&mut s, 4);
        let within: Vec<f64> = (4..10)
            .map(|_| accuracy(&p, &s.next_chunk().unwrap()))
            .collect();
        let after: Vec<f64> = (10..16)
            .map(|_| accuracy(&p, &s.next_chunk().unwrap()))
            .collect();
        let spread = within.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
            - within.iter().cloned().fold(f64::INFINITY, f64::min);
        // Binomial sampling noise at n=200 is about ±0.07 at 3σ.
        assert!(spread < 0.15, "{within:?}");
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        assert!(mean(&after) < mean(&within) - 0.1, "{within:?} {after:?}");
    }

    #[test]
    fn seeded() {
        let mut a = DriftingStream::new(DriftConfig::default(), 1).unwrap();
        let mut b = DriftingStream::new(DriftConfig::default(), 1).unwrap();
        for _ in 0..30 {
            assert_eq!(a.next_chunk().unwrap(), b.next_chunk().unwrap());
        }
    }
}
