use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::profiler::{DeviceFeatures, LogEntry};
use crate::rng;

use super::device::{DeviceProfile, DeviceState, ThermalParams};

/// On-disk fleet description: a list of `[[device]]` tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FleetFile {
    pub device: Vec<DeviceProfile>,
}

pub fn parse_fleet(text: &str) -> Result<Vec<DeviceProfile>> {
    let de = toml::Deserializer::parse(text).map_err(|e| Error::config("fleet", e.to_string()))?;
    let file: FleetFile = serde_path_to_error::deserialize(de)
        .map_err(|e| Error::config(format!("fleet.{}", e.path()), e.inner().to_string()))?;
    if file.device.is_empty() {
        return Err(Error::config("fleet.device", "fleet file lists no devices"));
    }
    for d in &file.device {
        d.validate()?;
    }
    Ok(file.device)
}

pub fn load_fleet(path: impl AsRef<Path>) -> Result<Vec<DeviceProfile>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_fleet(&text)
}

fn profile(name: &str, freq: f64, alpha_time: f64, power: f64, total_mem: f64) -> DeviceProfile {
    DeviceProfile {
        device_model: name.to_owned(),
        true_alpha_time: alpha_time,
        true_alpha_energy: alpha_time * power,
        noise_cv: 0.05,
        thermal: ThermalParams::default(),
        feature_base: DeviceFeatures {
            avail_mem: total_mem * 0.45,
            total_mem,
            temperature: ThermalParams::default().ambient,
            cpu_freq_sum: freq,
            energy_per_cpu_time: power,
        },
    }
}

/// Ten synthetic handsets spanning a 7× speed range. Energy is in percent of
/// battery.
pub fn test_fleet() -> Vec<DeviceProfile> {
    [
        ("handset-a", 16_800.0, 0.010, 0.030, 8192.0),
        ("handset-b", 13_600.0, 0.013, 0.018, 6144.0),
        ("handset-c", 12_000.0, 0.016, 0.026, 6144.0),
        ("handset-d", 9_600.0, 0.021, 0.022, 4096.0),
        ("handset-e", 8_800.0, 0.026, 0.034, 4096.0),
        ("handset-f", 7_200.0, 0.032, 0.016, 3072.0),
        ("handset-g", 6_000.0, 0.039, 0.028, 3072.0),
        ("handset-h", 4_800.0, 0.047, 0.020, 2048.0),
        ("handset-i", 4_000.0, 0.058, 0.024, 2048.0),
        ("handset-j", 3_200.0, 0.070, 0.032, 1536.0),
    ]
    .iter()
    .map(|&(n, f, a, p, m)| profile(n, f, a, p, m))
    .collect()
}

/// Fifteen profiles, disjoint from [`test_fleet`], used for offline
/// pre-training of the cold-start predictors.
pub fn training_fleet() -> Vec<DeviceProfile> {
    [
        ("bench-01", 18_000.0, 0.009, 0.027, 8192.0),
        ("bench-02", 15_200.0, 0.012, 0.021, 8192.0),
        ("bench-03", 14_400.0, 0.011, 0.033, 6144.0),
        ("bench-04", 12_800.0, 0.015, 0.019, 6144.0),
        ("bench-05", 11_200.0, 0.017, 0.029, 4096.0),
        ("bench-06", 10_400.0, 0.019, 0.024, 4096.0),
        ("bench-07", 9_200.0, 0.023, 0.031, 4096.0),
        ("bench-08", 8_000.0, 0.027, 0.017, 3072.0),
        ("bench-09", 7_600.0, 0.030, 0.025, 3072.0),
        ("bench-10", 6_400.0, 0.036, 0.035, 3072.0),
        ("bench-11", 5_600.0, 0.040, 0.022, 2048.0),
        ("bench-12", 5_200.0, 0.045, 0.028, 2048.0),
        ("bench-13", 4_400.0, 0.052, 0.018, 2048.0),
        ("bench-14", 3_600.0, 0.063, 0.030, 1536.0),
        ("bench-15", 3_000.0, 0.075, 0.026, 1536.0),
    ]
    .iter()
    .map(|&(n, f, a, p, m)| profile(n, f, a, p, m))
    .collect()
}

/// Offline profiling: each device runs tasks of geometrically growing size
/// (×1.5 from 1) until a task exceeds twice the time or the energy SLO,
/// idling about `gap_s` seconds between tasks.
pub fn offline_sweep(
    profiles: &[DeviceProfile],
    t_slo: f64,
    e_slo: f64,
    gap_s: f64,
    seed: u64,
) -> Vec<LogEntry> {
    let mut log = Vec::new();
    for (i, p) in profiles.iter().enumerate() {
        let mut r = rng::indexed_stream(seed, "offline-sweep", i as u64);
        let mut dev = DeviceState::new(p.clone());
        let mut now = 0.0;
        let mut n = 1u64;
        loop {
            dev.cool_to(now);
            let features = dev.features();
            let out = dev.simulate_task(now, n, &mut r);
            log.push(LogEntry {
                device_model: p.device_model.clone(),
                features,
                samples: n,
                alpha_time: out.t_comp / n as f64,
                alpha_energy: out.energy / n as f64,
            });
            now += out.t_comp + gap_s * (0.5 + r.random::<f64>());
            if out.t_comp > 2.0 * t_slo || out.energy > 2.0 * e_slo || n > 100_000 {
                break;
            }
            n = ((n as f64 * 1.5).ceil() as u64).max(n + 1);
        }
    }
    log
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_are_valid_and_span_seven_fold() {
        let fleet = test_fleet();
        assert_eq!(fleet.len(), 10);
        assert_eq!(training_fleet().len(), 15);
        for p in fleet.iter().chain(&training_fleet()) {
            p.validate().unwrap();
        }
        let max = fleet.iter().map(|p| p.true_alpha_time).fold(0.0, f64::max);
        let min = fleet
            .iter()
            .map(|p| p.true_alpha_time)
            .fold(f64::INFINITY, f64::min);
        assert!((max / min - 7.0).abs() < 1e-9);
    }

    #[test]
    fn fleet_file_round_trip() {
        let text = toml::to_string(&FleetFile {
            device: test_fleet(),
        })
        .unwrap();
        assert_eq!(parse_fleet(&text).unwrap(), test_fleet());
        let minimal = r#"
            [[device]]
            device_model = "m"
            true_alpha_time = 0.02
            true_alpha_energy = 0.0004
            feature_base = { avail_mem = 1.0, total_mem = 2.0, temperature = 25.0, cpu_freq_sum = 4000.0, energy_per_cpu_time = 0.02 }
        "#;
        let p = parse_fleet(minimal).unwrap();
        assert_eq!(p[0].noise_cv, 0.05);
        let err = parse_fleet(&minimal.replace("true_alpha_time", "true_alpha_tim")).unwrap_err();
        assert!(err.to_string().contains("fleet.device"), "{err}");
    }

    #[test]
    fn sweep_reaches_twice_the_slo() {
        let log = offline_sweep(&training_fleet()[..2], 3.0, 1e9, 30.0, 1);
        let per_device = log.iter().filter(|e| e.device_model == "bench-01").count();
        assert!(per_device > 10);
        let energy_bound = offline_sweep(&training_fleet()[..1], 1e9, 0.075, 30.0, 1);
        assert!(energy_bound.len() > 5);
        assert!(energy_bound.len() < per_device + 5);
        assert_eq!(
            log,
            offline_sweep(&training_fleet()[..2], 3.0, 1e9, 30.0, 1)
        );
    }
}
