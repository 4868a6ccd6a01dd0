use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::features::{DeviceFeatures, PredictorKind, Standardizer};
use super::ols::{ols_fit, LinearCoefModel, DEFAULT_RIDGE};
use super::pa::{pa_update, PaModel};

/// Lower clamp applied to predicted per-sample coefficients.
pub const ALPHA_FLOOR: f64 = 1e-9;

/// max(1, floor(min(t_slo/α_t, e_slo/α_e))) with both α clamped to
/// [`ALPHA_FLOOR`].
pub fn bound_from_alphas(alpha_time: f64, alpha_energy: f64, t_slo: f64, e_slo: f64) -> u64 {
    let clamp = |a: f64| {
        if a.is_finite() && a > ALPHA_FLOOR {
            a
        } else {
            ALPHA_FLOOR
        }
    };
    let n = (t_slo / clamp(alpha_time))
        .min(e_slo / clamp(alpha_energy))
        .floor();
    // `as` saturates; NaN cannot occur with positive SLOs.
    (n as u64).max(1)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProfilerConfig {
    /// ε for the time predictor, seconds per sample.
    pub epsilon_time: f64,
    /// ε for the energy predictor, energy units per sample.
    pub epsilon_energy: f64,
    /// Observations between cold-start refits.
    pub retrain_every: u64,
    pub ridge: f64,
}

impl Default for ProfilerConfig {
    fn default() -> Self {
        ProfilerConfig {
            epsilon_time: 1e-4,
            epsilon_energy: 6e-5,
            retrain_every: 50,
            ridge: DEFAULT_RIDGE,
        }
    }
}

/// One observed task: features and measured per-sample coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub device_model: String,
    pub features: DeviceFeatures,
    /// Batch size of the task.
    pub samples: u64,
    pub alpha_time: f64,
    pub alpha_energy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProfilerState {
    config: ProfilerConfig,
    standardizer: Standardizer,
    cold_time: LinearCoefModel,
    cold_energy: LinearCoefModel,
    per_model_time: BTreeMap<String, PaModel>,
    per_model_energy: BTreeMap<String, PaModel>,
    training_log: Vec<LogEntry>,
    since_refit: u64,
}

impl ProfilerState {
    /// An untrained profiler: zero cold-start coefficients, identity scaling.
    pub fn new(config: ProfilerConfig) -> Result<Self> {
        if config.retrain_every == 0 {
            return Err(Error::InvalidArgument(
                "retrain_every must be positive".into(),
            ));
        }
        if !(config.epsilon_time > 0.0 && config.epsilon_energy > 0.0) {
            return Err(Error::InvalidArgument(
                "PA epsilons must be positive".into(),
            ));
        }
        Ok(ProfilerState {
            config,
            standardizer: Standardizer::identity(),
            cold_time: LinearCoefModel::zeros(PredictorKind::Time),
            cold_energy: LinearCoefModel::zeros(PredictorKind::Energy),
            per_model_time: BTreeMap::new(),
            per_model_energy: BTreeMap::new(),
            training_log: Vec::new(),
            since_refit: 0,
        })
    }

    /// Freezes feature scaling on an offline log and fits the cold-start
    /// models to it. The log seeds the training log.
    pub fn pretrain(config: ProfilerConfig, offline: Vec<LogEntry>) -> Result<Self> {
        let mut state = ProfilerState::new(config)?;
        state.standardizer = Standardizer::fit(offline.iter().map(|e| &e.features));
        state.training_log = offline;
        if !state.training_log.is_empty() {
            state.refit()?;
        }
        Ok(state)
    }

    pub fn config(&self) -> &ProfilerConfig {
        &self.config
    }

    pub fn cold_model(&self, kind: PredictorKind) -> &LinearCoefModel {
        match kind {
            PredictorKind::Time => &self.cold_time,
            PredictorKind::Energy => &self.cold_energy,
        }
    }

    pub fn personal_model(&self, device_model: &str, kind: PredictorKind) -> Option<&PaModel> {
        match kind {
            PredictorKind::Time => self.per_model_time.get(device_model),
            PredictorKind::Energy => self.per_model_energy.get(device_model),
        }
    }

    pub fn training_log(&self) -> &[LogEntry] {
        &self.training_log
    }

    /// (α̂_time, α̂_energy) before clamping.
    pub fn predict_alphas(&self, device_model: &str, x: &DeviceFeatures) -> (f64, f64) {
        let xt = self.standardizer.transform(x, PredictorKind::Time);
        let xe = self.standardizer.transform(x, PredictorKind::Energy);
        let t = match self.per_model_time.get(device_model) {
            Some(pa) => pa.predict(&xt),
            None => self.cold_time.predict(&xt),
        };
        let e = match self.per_model_energy.get(device_model) {
            Some(pa) => pa.predict(&xe),
            None => self.cold_energy.predict(&xe),
        };
        (t, e)
    }

    pub fn predict_bound(
        &self,
        device_model: &str,
        x: &DeviceFeatures,
        t_slo: f64,
        e_slo: f64,
    ) -> u64 {
        let (t, e) = self.predict_alphas(device_model, x);
        bound_from_alphas(t, e, t_slo, e_slo)
    }

    pub fn observe(
        &mut self,
        device_model: &str,
        x: &DeviceFeatures,
        n: u64,
        t_comp: f64,
        energy: f64,
    ) -> Result<()> {
        if n == 0 {
            return Err(Error::InvalidArgument("batch size must be positive".into()));
        }
        if !(t_comp > 0.0) || !(energy >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "need t_comp > 0 and energy ≥ 0 (got {t_comp}, {energy})"
            )));
        }
        x.validate()?;
        let alpha_time = t_comp / n as f64;
        let alpha_energy = energy / n as f64;
        self.training_log.push(LogEntry {
            device_model: device_model.to_owned(),
            features: *x,
            samples: n,
            alpha_time,
            alpha_energy,
        });

        let xt = self.standardizer.transform(x, PredictorKind::Time);
        let xe = self.standardizer.transform(x, PredictorKind::Energy);
        let (eps_t, eps_e) = (self.config.epsilon_time, self.config.epsilon_energy);
        let cold_t = &self.cold_time.theta;
        let cold_e = &self.cold_energy.theta;
        let pa_t = self
            .per_model_time
            .entry(device_model.to_owned())
            .or_insert_with(|| PaModel::new(cold_t.clone(), eps_t));
        pa_update(pa_t, &xt, alpha_time)?;
        let pa_e = self
            .per_model_energy
            .entry(device_model.to_owned())
            .or_insert_with(|| PaModel::new(cold_e.clone(), eps_e));
        pa_update(pa_e, &xe, alpha_energy)?;

        self.since_refit += 1;
        if self.since_refit >= self.config.retrain_every {
            self.refit()?;
        }
        Ok(())
    }

    /// Refits both cold-start models over the full training log.
    pub fn refit(&mut self) -> Result<()> {
        self.since_refit = 0;
        if self.training_log.is_empty() {
            return Ok(());
        }
        for kind in [PredictorKind::Time, PredictorKind::Energy] {
            let rows: Vec<Vec<f64>> = self
                .training_log
                .iter()
                .map(|e| self.standardizer.transform(&e.features, kind))
                .collect();
            let y: Vec<f64> = self
                .training_log
                .iter()
                .map(|e| match kind {
                    PredictorKind::Time => e.alpha_time,
                    PredictorKind::Energy => e.alpha_energy,
                })
                .collect();
            let theta = ols_fit(&rows, &y, self.config.ridge)?;
            match kind {
                PredictorKind::Time => self.cold_time.theta = theta,
                PredictorKind::Energy => self.cold_energy.theta = theta,
            }
        }
        Ok(())
    }
}
