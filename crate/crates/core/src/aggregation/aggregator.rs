use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelParams;

use super::dampening::{dampening, weight, DampeningPolicy};
use super::labels::similarity;
use super::staleness::StalenessTracker;

/// A worker's gradient and where it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientResult {
    pub worker_id: u64,
    /// Clock of the model snapshot the gradient was computed on.
    pub pulled_clock: u64,
    pub grad: Vec<f64>,
    pub batch_size: usize,
    pub label_counts: Vec<u64>,
}

/// A named combination of dampening policy, similarity boosting and
/// gradient averaging.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AggregationRule {
    pub policy: DampeningPolicy,
    /// Divide Λ by the label-distribution similarity (capped at 1).
    pub similarity_boost: bool,
    /// Divide the weighted sum by K.
    pub average: bool,
}

impl AggregationRule {
    pub const fn adasgd() -> Self {
        AggregationRule {
            policy: DampeningPolicy::AdaSgdExponential,
            similarity_boost: true,
            average: false,
        }
    }

    pub const fn dynsgd() -> Self {
        AggregationRule {
            policy: DampeningPolicy::DynSgdInverse,
            similarity_boost: false,
            average: false,
        }
    }

    /// Staleness-unaware gradient averaging.
    pub const fn fedavg() -> Self {
        AggregationRule {
            policy: DampeningPolicy::Unit,
            similarity_boost: false,
            average: true,
        }
    }

    pub const fn ssgd() -> Self {
        AggregationRule {
            policy: DampeningPolicy::Synchronous,
            similarity_boost: false,
            average: true,
        }
    }

    pub fn name(&self) -> &'static str {
        match (self.policy, self.similarity_boost) {
            (DampeningPolicy::AdaSgdExponential, true) => "adasgd",
            (DampeningPolicy::AdaSgdExponential, false) => "adasgd-nosim",
            (DampeningPolicy::DynSgdInverse, false) => "dynsgd",
            (DampeningPolicy::DynSgdInverse, true) => "dynsgd-sim",
            (DampeningPolicy::Unit, _) => "fedavg",
            (DampeningPolicy::Synchronous, _) => "ssgd",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AggregatorConfig {
    pub rule: AggregationRule,
    /// Gradients consumed per model update.
    pub k: usize,
    pub lr: f64,
    /// Staleness window length.
    pub window: usize,
    pub s_percent: f64,
    /// Updates served by the inverse dampening before τ_thres is trusted.
    pub bootstrap_len: u64,
}

impl Default for AggregatorConfig {
    fn default() -> Self {
        AggregatorConfig {
            rule: AggregationRule::adasgd(),
            k: 1,
            lr: 0.05,
            window: 1000,
            s_percent: 99.7,
            bootstrap_len: 100,
        }
    }
}

/// How one gradient entered an update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Contribution {
    pub worker_id: u64,
    pub tau: u64,
    pub lambda: f64,
    pub sim: f64,
    pub weight: f64,
    pub batch_size: usize,
    pub fallback: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UpdateReport {
    /// Model clock after the update.
    pub update_index: u64,
    pub tau_thres: Option<f64>,
    pub contributions: Vec<Contribution>,
}

/// Server-side aggregation state. Single writer: `submit` calls define a
/// total order that fully determines the outcome.
#[derive(Debug, Clone)]
pub struct Aggregator {
    model: ModelParams,
    global_label_counts: Vec<u64>,
    tracker: StalenessTracker,
    config: AggregatorConfig,
    pending: Vec<(GradientResult, Contribution)>,
    last_tau_thres: Option<f64>,
    consumed: u64,
}

impl Aggregator {
    pub fn new(model: ModelParams, config: AggregatorConfig) -> Result<Self> {
        if config.k == 0 {
            return Err(Error::InvalidArgument("K must be positive".into()));
        }
        if !(config.lr > 0.0) || !config.lr.is_finite() {
            return Err(Error::InvalidArgument(
                "learning rate must be positive".into(),
            ));
        }
        if config.window == 0 {
            return Err(Error::InvalidArgument(
                "staleness window must be positive".into(),
            ));
        }
        if !(config.s_percent > 0.0 && config.s_percent <= 100.0) {
            return Err(Error::InvalidArgument(
                "s_percent must lie in (0, 100]".into(),
            ));
        }
        let classes = model.spec.num_classes;
        Ok(Aggregator {
            tracker: StalenessTracker::new(config.window, config.s_percent, config.bootstrap_len),
            global_label_counts: vec![0; classes],
            model,
            config,
            pending: Vec::with_capacity(config.k),
            last_tau_thres: None,
            consumed: 0,
        })
    }

    pub fn model(&self) -> &ModelParams {
        &self.model
    }

    pub fn clock(&self) -> u64 {
        self.model.clock
    }

    pub fn config(&self) -> &AggregatorConfig {
        &self.config
    }

    pub fn global_label_counts(&self) -> &[u64] {
        &self.global_label_counts
    }

    pub fn tracker(&self) -> &StalenessTracker {
        &self.tracker
    }

    /// Results folded into the model so far (excludes the pending buffer).
    pub fn consumed(&self) -> u64 {
        self.consumed
    }

    pub fn pending(&self) -> usize {
        self.pending.len()
    }

    pub fn tau_threshold(&self) -> Option<f64> {
        self.last_tau_thres
    }

    /// Weighs and buffers one result; returns a report once K are buffered
    /// and the model has advanced.
    pub fn submit(&mut self, result: GradientResult) -> Result<Option<UpdateReport>> {
        let clock = self.model.clock;
        if result.pulled_clock > clock {
            return Err(Error::FutureClock {
                pulled: result.pulled_clock,
                current: clock,
            });
        }
        if result.grad.len() != self.model.values.len() {
            return Err(Error::DimensionMismatch {
                what: "gradient",
                expected: self.model.values.len(),
                found: result.grad.len(),
            });
        }
        if result.label_counts.len() != self.global_label_counts.len() {
            return Err(Error::DimensionMismatch {
                what: "label counts",
                expected: self.global_label_counts.len(),
                found: result.label_counts.len(),
            });
        }
        if result.grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite("gradient"));
        }
        let rule = self.config.rule;
        if rule.policy == DampeningPolicy::Synchronous && result.pulled_clock != clock {
            return Err(Error::StaleSynchronous {
                pulled: result.pulled_clock,
                current: clock,
            });
        }

        let tau = clock - result.pulled_clock;
        self.tracker.record(tau);
        let tau_thres = self.tracker.tau_threshold();
        self.last_tau_thres = tau_thres;
        let damp = dampening(rule.policy, tau, tau_thres);
        let sim = similarity(&result, &self.global_label_counts)?;
        let w = if rule.similarity_boost {
            weight(damp.value, sim)
        } else {
            damp.value
        };
        let contribution = Contribution {
            worker_id: result.worker_id,
            tau,
            lambda: damp.value,
            sim,
            weight: w,
            batch_size: result.batch_size,
            fallback: damp.fallback,
        };
        self.pending.push((result, contribution));
        if self.pending.len() < self.config.k {
            return Ok(None);
        }
        self.apply_pending().map(Some)
    }

    fn apply_pending(&mut self) -> Result<UpdateReport> {
        let mut direction = vec![0.0; self.model.values.len()];
        let mut contributions = Vec::with_capacity(self.pending.len());
        for (result, c) in self.pending.drain(..) {
            for (d, g) in direction.iter_mut().zip(&result.grad) {
                *d += c.weight * g;
            }
            for (total, n) in self
                .global_label_counts
                .iter_mut()
                .zip(&result.label_counts)
            {
                *total += n;
            }
            contributions.push(c);
        }
        if self.config.rule.average {
            let inv_k = 1.0 / contributions.len() as f64;
            direction.iter_mut().for_each(|d| *d *= inv_k);
        }
        self.model.step(&direction, self.config.lr)?;
        self.consumed += contributions.len() as u64;
        Ok(UpdateReport {
            update_index: self.model.clock,
            tau_thres: self.last_tau_thres,
            contributions,
        })
    }
}
