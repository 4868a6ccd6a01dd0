use rand::Rng;
use rand_distr::{Distribution, Exp, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How late a result is.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StalenessModel {
    /// No delay.
    #[default]
    None,
    /// round(max(0, N(mean, std))) model updates.
    Gaussian { mean: f64, std: f64 },
    /// As Gaussian, but results touching any of `tail_labels` are `tail_value`
    /// updates late.
    GaussianLongTail {
        mean: f64,
        std: f64,
        tail_labels: Vec<usize>,
        tail_value: u64,
    },
    /// Round-trip latency in seconds: `min_s` plus an exponential with mean
    /// `mean_s - min_s`.
    ExponentialLatency { min_s: f64, mean_s: f64 },
}

impl StalenessModel {
    pub fn d1() -> Self {
        StalenessModel::Gaussian {
            mean: 6.0,
            std: 2.0,
        }
    }

    pub fn d2() -> Self {
        StalenessModel::Gaussian {
            mean: 12.0,
            std: 4.0,
        }
    }

    pub fn round_trip() -> Self {
        StalenessModel::ExponentialLatency {
            min_s: 7.1,
            mean_s: 8.45,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match self {
            StalenessModel::None => true,
            StalenessModel::Gaussian { mean, std }
            | StalenessModel::GaussianLongTail { mean, std, .. } => {
                mean.is_finite() && *std >= 0.0 && std.is_finite()
            }
            StalenessModel::ExponentialLatency { min_s, mean_s } => *min_s >= 0.0 && mean_s > min_s,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "invalid staleness model {self:?}"
            )))
        }
    }

    /// Whether staleness is a count of updates rather than a latency.
    pub fn is_update_count(&self) -> bool {
        !matches!(self, StalenessModel::ExponentialLatency { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StalenessDraw {
    /// Model updates that happen between pull and consumption.
    Updates(u64),
    /// Seconds between pull and consumption; the orchestrator turns this into
    /// a count of updates.
    Latency(f64),
}

fn gaussian<R: Rng + ?Sized>(mean: f64, std: f64, rng: &mut R) -> u64 {
    if std == 0.0 {
        return mean.max(0.0).round() as u64;
    }
    let x: f64 = Normal::new(mean, std).expect("validated").sample(rng);
    x.max(0.0).round() as u64
}

/// Draws the delay for a result with the given label counts. The long-tail
/// mode draws its Gaussian sample either way, so non-tail results see the
/// same stream as plain Gaussian mode.
pub fn next_staleness<R: Rng + ?Sized>(
    model: &StalenessModel,
    label_counts: &[u64],
    rng: &mut R,
) -> StalenessDraw {
    match model {
        StalenessModel::None => StalenessDraw::Updates(0),
        StalenessModel::Gaussian { mean, std } => {
            StalenessDraw::Updates(gaussian(*mean, *std, rng))
        }
        StalenessModel::GaussianLongTail {
            mean,
            std,
            tail_labels,
            tail_value,
        } => {
            let base = gaussian(*mean, *std, rng);
            let hit = tail_labels
                .iter()
                .any(|&l| label_counts.get(l).is_some_and(|&c| c > 0));
            StalenessDraw::Updates(if hit { *tail_value } else { base })
        }
        StalenessModel::ExponentialLatency { min_s, mean_s } => {
            let extra: f64 = Exp::new(1.0 / (mean_s - min_s))
                .expect("validated")
                .sample(rng);
            StalenessDraw::Latency(min_s + extra)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn updates(d: StalenessDraw) -> u64 {
        match d {
            StalenessDraw::Updates(u) => u,
            StalenessDraw::Latency(_) => panic!("latency"),
        }
    }

    #[test]
    fn d1_mean() {
        let mut r = rng::stream(1, "st");
        let n = 10_000;
        let sum: u64 = (0..n)
            .map(|_| updates(next_staleness(&StalenessModel::d1(), &[1], &mut r)))
            .sum();
        let mean = sum as f64 / n as f64;
        assert!((5.8..=6.2).contains(&mean), "{mean}");
    }

    #[test]
    fn degenerate_gaussian() {
        let m = StalenessModel::Gaussian {
            mean: 5.0,
            std: 0.0,
        };
        let mut r = rng::stream(1, "st");
        assert!((0..100).all(|_| updates(next_staleness(&m, &[1], &mut r)) == 5));
    }

    #[test]
    fn long_tail_branch_is_exact() {
        let tail = StalenessModel::GaussianLongTail {
            mean: 6.0,
            std: 2.0,
            tail_labels: vec![0],
            tail_value: 48,
        };
        let mut a = rng::stream(2, "st");
        let mut b = rng::stream(2, "st");
        for i in 0..500 {
            let counts = if i % 3 == 0 { vec![1, 4] } else { vec![0, 5] };
            let t = updates(next_staleness(&tail, &counts, &mut a));
            let g = updates(next_staleness(&StalenessModel::d1(), &counts, &mut b));
            if counts[0] > 0 {
                assert_eq!(t, 48);
            } else {
                assert_eq!(t, g);
            }
        }
    }

    #[test]
    fn shifted_exponential_latency() {
        let mut r = rng::stream(3, "st");
        let n = 20_000;
        let xs: Vec<f64> = (0..n)
            .map(
                |_| match next_staleness(&StalenessModel::round_trip(), &[], &mut r) {
                    StalenessDraw::Latency(l) => l,
                    StalenessDraw::Updates(_) => panic!(),
                },
            )
            .collect();
        assert!(xs.iter().all(|&x| x >= 7.1));
        let mean = xs.iter().sum::<f64>() / n as f64;
        assert!((mean - 8.45).abs() < 0.05, "{mean}");
        assert!(StalenessModel::ExponentialLatency {
            min_s: 3.0,
            mean_s: 2.0
        }
        .validate()
        .is_err());
    }
}
