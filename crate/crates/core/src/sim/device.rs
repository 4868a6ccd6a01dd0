use rand::Rng;
use rand_distr::{Distribution, LogNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::profiler::DeviceFeatures;

/// Linear slowdown above a nominal temperature, linear heating per sample up
/// to a ceiling, exponential cooling toward ambient while idle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ThermalParams {
    /// °C per processed sample.
    pub heat_per_sample: f64,
    /// Per second.
    pub cool_rate: f64,
    pub ambient: f64,
    pub nominal: f64,
    pub max_temp: f64,
    /// Fractional slowdown per °C above nominal.
    pub alpha_temp_slope: f64,
}

impl Default for ThermalParams {
    fn default() -> Self {
        ThermalParams {
            heat_per_sample: 0.04,
            cool_rate: 0.02,
            ambient: 25.0,
            nominal: 32.0,
            max_temp: 42.0,
            alpha_temp_slope: 0.05,
        }
    }
}

/// Hidden ground truth for one device model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceProfile {
    pub device_model: String,
    /// Seconds per sample at or below nominal temperature.
    pub true_alpha_time: f64,
    /// Energy units per sample at or below nominal temperature.
    pub true_alpha_energy: f64,
    #[serde(default = "default_cv")]
    pub noise_cv: f64,
    #[serde(default)]
    pub thermal: ThermalParams,
    pub feature_base: DeviceFeatures,
}

fn default_cv() -> f64 {
    0.05
}

impl DeviceProfile {
    pub fn validate(&self) -> Result<()> {
        if !(self.true_alpha_time > 0.0 && self.true_alpha_energy > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "{}: true coefficients must be positive",
                self.device_model
            )));
        }
        if !(self.noise_cv >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "{}: noise_cv must be ≥ 0",
                self.device_model
            )));
        }
        let th = &self.thermal;
        if !(th.cool_rate > 0.0 && th.heat_per_sample >= 0.0 && th.alpha_temp_slope >= 0.0)
            || th.max_temp < th.ambient
        {
            return Err(Error::InvalidArgument(format!(
                "{}: inconsistent thermal parameters",
                self.device_model
            )));
        }
        self.feature_base.validate()
    }
}

/// Multiplicative noise with mean 1 and the given coefficient of variation.
pub fn lognormal_noise<R: Rng + ?Sized>(cv: f64, rng: &mut R) -> f64 {
    if cv <= 0.0 {
        return 1.0;
    }
    let sigma2 = (1.0 + cv * cv).ln();
    LogNormal::new(-sigma2 / 2.0, sigma2.sqrt())
        .expect("finite lognormal parameters")
        .sample(rng)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TaskOutcome {
    pub t_comp: f64,
    pub energy: f64,
    /// Features after the task, reflecting the warmed-up temperature.
    pub features: DeviceFeatures,
}

/// A device's mutable thermal state.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviceState {
    pub profile: DeviceProfile,
    temperature: f64,
    /// Simulation time at which `temperature` was last valid.
    as_of: f64,
}

impl DeviceState {
    pub fn new(profile: DeviceProfile) -> Self {
        let temperature = profile.thermal.ambient;
        DeviceState {
            profile,
            temperature,
            as_of: 0.0,
        }
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    /// Exponential cooling toward ambient up to `now`. Earlier times are a
    /// no-op (the device is still busy).
    pub fn cool_to(&mut self, now: f64) {
        if now > self.as_of {
            let th = &self.profile.thermal;
            let decay = (-th.cool_rate * (now - self.as_of)).exp();
            self.temperature = th.ambient + (self.temperature - th.ambient) * decay;
            self.as_of = now;
        }
    }

    /// Features reported right now.
    pub fn features(&self) -> DeviceFeatures {
        DeviceFeatures {
            temperature: self.temperature,
            ..self.profile.feature_base
        }
    }

    /// Slowdown factor at the current temperature.
    pub fn inflation(&self) -> f64 {
        let th = &self.profile.thermal;
        1.0 + th.alpha_temp_slope * (self.temperature - th.nominal).max(0.0)
    }

    /// Runs `n` samples starting at `now`.
    pub fn simulate_task<R: Rng + ?Sized>(&mut self, now: f64, n: u64, rng: &mut R) -> TaskOutcome {
        self.cool_to(now);
        let inflation = self.inflation();
        let p = &self.profile;
        let n_f = n.max(1) as f64;
        let t_comp = p.true_alpha_time * inflation * n_f * lognormal_noise(p.noise_cv, rng);
        let energy = p.true_alpha_energy * inflation * n_f * lognormal_noise(p.noise_cv, rng);
        let th = p.thermal;
        self.temperature = (self.temperature + th.heat_per_sample * n_f).min(th.max_temp);
        self.as_of = self.as_of.max(now) + t_comp;
        TaskOutcome {
            t_comp,
            energy,
            features: self.features(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn profile(cv: f64) -> DeviceProfile {
        DeviceProfile {
            device_model: "x".into(),
            true_alpha_time: 0.02,
            true_alpha_energy: 4e-4,
            noise_cv: cv,
            thermal: ThermalParams::default(),
            feature_base: DeviceFeatures {
                avail_mem: 1000.0,
                total_mem: 2000.0,
                temperature: 25.0,
                cpu_freq_sum: 6000.0,
                energy_per_cpu_time: 0.02,
            },
        }
    }

    #[test]
    fn noiseless_at_nominal_is_linear() {
        let mut r = rng::stream(0, "dev");
        let mut d = DeviceState::new(profile(0.0));
        let o = d.simulate_task(0.0, 100, &mut r);
        assert_eq!(o.t_comp, 0.02 * 100.0);
        let mut d1 = DeviceState::new(profile(0.0));
        let mut d2 = DeviceState::new(profile(0.0));
        let a = d1.simulate_task(0.0, 50, &mut r).t_comp;
        let b = d2.simulate_task(0.0, 100, &mut r).t_comp;
        assert_eq!(b, 2.0 * a);
    }

    #[test]
    fn back_to_back_tasks_heat_up() {
        let mut r = rng::stream(0, "dev");
        let mut d = DeviceState::new(profile(0.0));
        let mut now = 0.0;
        let mut prev = 0.0;
        for _ in 0..6 {
            let o = d.simulate_task(now, 300, &mut r);
            assert!(o.t_comp >= prev);
            prev = o.t_comp;
            now += o.t_comp;
        }
        assert!(prev > 0.02 * 300.0);
        assert!(prev <= 1.5 * 0.02 * 300.0 + 1e-12);
        assert!(d.features().temperature > 25.0);
    }

    #[test]
    fn idle_cooling_follows_closed_form() {
        let mut r = rng::stream(0, "dev");
        let mut d = DeviceState::new(profile(0.0));
        let o = d.simulate_task(0.0, 300, &mut r);
        let hot = d.temperature();
        let end = o.t_comp;
        d.cool_to(end + 50.0);
        let want = 25.0 + (hot - 25.0) * (-0.02f64 * 50.0).exp();
        assert!((d.temperature() - want).abs() < 1e-12);
        d.cool_to(end + 1000.0);
        assert!((d.temperature() - 25.0).abs() <= 0.01 * 25.0);
    }

    #[test]
    fn noise_has_unit_mean() {
        let mut r = rng::stream(1, "noise");
        let n = 20_000;
        let xs: Vec<f64> = (0..n).map(|_| lognormal_noise(0.05, &mut r)).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let sd = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
        assert!((mean - 1.0).abs() < 3e-3);
        assert!((sd - 0.05).abs() < 3e-3);
    }
}
