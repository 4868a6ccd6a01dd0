use std::collections::{BTreeMap, VecDeque};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::aggregation::{
    nearest_rank, similarity, Aggregator, AggregatorConfig, DampeningPolicy, GradientResult,
    UpdateReport,
};
use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::profiler::{DeviceFeatures, MauiState, ProfilerState};

/// Admission threshold on one request attribute.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum ThresholdMode {
    #[default]
    Off,
    Fixed {
        value: f64,
    },
    /// The p-th percentile (nearest rank) of values seen in earlier requests.
    Percentile {
        p: f64,
    },
}

impl ThresholdMode {
    pub fn validate(&self, what: &str) -> Result<()> {
        match *self {
            ThresholdMode::Percentile { p } if !(0.0..100.0).contains(&p) => Err(
                Error::InvalidArgument(format!("{what} percentile must lie in [0, 100), got {p}")),
            ),
            ThresholdMode::Fixed { value } if !value.is_finite() => Err(Error::InvalidArgument(
                format!("{what} threshold must be finite"),
            )),
            _ => Ok(()),
        }
    }

    fn threshold(&self, sorted_history: &[f64]) -> Option<f64> {
        match *self {
            ThresholdMode::Off => None,
            ThresholdMode::Fixed { value } => Some(value),
            // Percentile 0 means "no pruning"; nearest rank would return the minimum.
            ThresholdMode::Percentile { p } if p <= 0.0 => None,
            ThresholdMode::Percentile { p } => nearest_rank(sorted_history, p),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ControllerConfig {
    /// Requests whose assigned batch size falls below this are rejected.
    pub size_threshold: ThresholdMode,
    /// Requests whose label similarity exceeds this are rejected.
    pub sim_threshold: ThresholdMode,
    /// Seconds.
    pub t_slo: f64,
    /// Energy units (percent of battery for the shipped fleets).
    pub e_slo: f64,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        ControllerConfig {
            size_threshold: ThresholdMode::Off,
            sim_threshold: ThresholdMode::Off,
            t_slo: 3.0,
            e_slo: 0.075,
        }
    }
}

impl ControllerConfig {
    pub fn validate(&self) -> Result<()> {
        self.size_threshold.validate("size")?;
        self.sim_threshold.validate("similarity")?;
        if !(self.t_slo > 0.0 && self.e_slo > 0.0) {
            return Err(Error::InvalidArgument("SLOs must be positive".into()));
        }
        Ok(())
    }
}

/// Protocol step 1: what a worker discloses when asking for work.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskRequest {
    pub worker_id: u64,
    pub device_model: String,
    pub features: DeviceFeatures,
    pub local_label_counts: Vec<u64>,
    pub local_size: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Predictor {
    Iprof,
    Maui,
}

impl Predictor {
    pub fn name(self) -> &'static str {
        match self {
            Predictor::Iprof => "iprof",
            Predictor::Maui => "maui",
        }
    }
}

/// Protocol step 2.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskAssignment {
    pub model: Arc<ModelParams>,
    pub minibatch_n: u64,
    /// The bound before the local-size cap.
    pub predicted_n: u64,
    pub predictor: Option<Predictor>,
    pub sim: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rejection {
    TooSmall,
    TooSimilar,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Decision {
    Accept(TaskAssignment),
    Reject(Rejection),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultOutcome {
    pub report: Option<UpdateReport>,
    pub dropped: bool,
}

/// Where the batch-size bound comes from.
#[derive(Debug, Clone)]
pub enum BoundSource {
    /// The caller supplies the bound with each request.
    External,
    /// Alternate per worker between I-PROF (even request ordinals of that
    /// worker) and the device-blind baseline (odd ordinals), or use I-PROF
    /// only.
    Profiled {
        iprof: Box<ProfilerState>,
        maui: MauiState,
        alternate: bool,
    },
}

#[derive(Debug, Clone)]
pub struct ServerConfig {
    pub aggregator: AggregatorConfig,
    pub controller: ControllerConfig,
    /// Model snapshots retained for historical pulls.
    pub history: usize,
}

/// Single-writer server state.
#[derive(Debug, Clone)]
pub struct Server {
    aggregator: Aggregator,
    controller: ControllerConfig,
    bounds: BoundSource,
    size_history: Vec<f64>,
    sim_history: Vec<f64>,
    worker_requests: BTreeMap<u64, u64>,
    snapshots: VecDeque<Arc<ModelParams>>,
    history: usize,
    requests: u64,
    rejected_small: u64,
    rejected_similar: u64,
    dropped: u64,
}

fn insert_sorted(v: &mut Vec<f64>, x: f64) {
    let at = v.partition_point(|&y| y <= x);
    v.insert(at, x);
}

impl Server {
    pub fn new(model: ModelParams, config: ServerConfig, bounds: BoundSource) -> Result<Self> {
        config.controller.validate()?;
        let aggregator = Aggregator::new(model, config.aggregator)?;
        let history = config.history.max(1);
        let mut snapshots = VecDeque::with_capacity(history);
        snapshots.push_back(Arc::new(aggregator.model().clone()));
        Ok(Server {
            aggregator,
            controller: config.controller,
            bounds,
            size_history: Vec::new(),
            worker_requests: BTreeMap::new(),
            sim_history: Vec::new(),
            snapshots,
            history,
            requests: 0,
            rejected_small: 0,
            rejected_similar: 0,
            dropped: 0,
        })
    }

    pub fn aggregator(&self) -> &Aggregator {
        &self.aggregator
    }

    pub fn clock(&self) -> u64 {
        self.aggregator.clock()
    }

    pub fn dropped_results(&self) -> u64 {
        self.dropped
    }

    pub fn rejections(&self) -> (u64, u64) {
        (self.rejected_small, self.rejected_similar)
    }

    pub fn profiler(&self) -> Option<&ProfilerState> {
        match &self.bounds {
            BoundSource::Profiled { iprof, .. } => Some(iprof),
            BoundSource::External => None,
        }
    }

    /// The current model snapshot.
    pub fn current(&self) -> Arc<ModelParams> {
        Arc::clone(self.snapshots.back().expect("history is never empty"))
    }

    /// The retained snapshot `tau` updates old, or the oldest retained one.
    pub fn snapshot_back(&self, tau: u64) -> Arc<ModelParams> {
        let len = self.snapshots.len();
        let idx = len - 1 - (tau as usize).min(len - 1);
        Arc::clone(&self.snapshots[idx])
    }

    /// Protocol steps 1–4. `external_bound` is used when the server has no
    /// profiler.
    pub fn handle_request(
        &mut self,
        req: &TaskRequest,
        external_bound: Option<u64>,
    ) -> Result<Decision> {
        if req.local_size == 0 || req.local_label_counts.iter().sum::<u64>() != req.local_size {
            return Err(Error::InvalidArgument(format!(
                "worker {}: label counts do not sum to the local size",
                req.worker_id
            )));
        }
        let num_classes = self.aggregator.global_label_counts().len();
        if req.local_label_counts.len() != num_classes {
            return Err(Error::DimensionMismatch {
                what: "request label counts",
                expected: num_classes,
                found: req.local_label_counts.len(),
            });
        }
        self.requests += 1;
        let ordinal = {
            let c = self.worker_requests.entry(req.worker_id).or_insert(0);
            *c += 1;
            *c - 1
        };
        let (t_slo, e_slo) = (self.controller.t_slo, self.controller.e_slo);
        let (bound, predictor) = match &self.bounds {
            BoundSource::External => (external_bound.unwrap_or(req.local_size), None),
            BoundSource::Profiled {
                iprof,
                maui,
                alternate,
            } => {
                if *alternate && ordinal % 2 == 1 {
                    (maui.predict_bound(t_slo, e_slo), Some(Predictor::Maui))
                } else {
                    (
                        iprof.predict_bound(&req.device_model, &req.features, t_slo, e_slo),
                        Some(Predictor::Iprof),
                    )
                }
            }
        };
        let bound = bound.max(1);
        let n = bound.min(req.local_size);
        let probe = GradientResult {
            worker_id: req.worker_id,
            pulled_clock: 0,
            grad: Vec::new(),
            batch_size: req.local_size as usize,
            label_counts: req.local_label_counts.clone(),
        };
        let sim = similarity(&probe, self.aggregator.global_label_counts())?;

        let size_cut = self.controller.size_threshold.threshold(&self.size_history);
        let sim_cut = self.controller.sim_threshold.threshold(&self.sim_history);
        insert_sorted(&mut self.size_history, n as f64);
        insert_sorted(&mut self.sim_history, sim);
        if size_cut.is_some_and(|c| (n as f64) < c) {
            self.rejected_small += 1;
            return Ok(Decision::Reject(Rejection::TooSmall));
        }
        if sim_cut.is_some_and(|c| sim > c) {
            self.rejected_similar += 1;
            return Ok(Decision::Reject(Rejection::TooSimilar));
        }
        Ok(Decision::Accept(TaskAssignment {
            model: self.current(),
            minibatch_n: n,
            predicted_n: bound,
            predictor,
            sim,
        }))
    }

    /// Records a finished task's measurements with every predictor.
    pub fn observe_task(
        &mut self,
        req: &TaskRequest,
        n: u64,
        t_comp: f64,
        energy: f64,
    ) -> Result<()> {
        if let BoundSource::Profiled { iprof, maui, .. } = &mut self.bounds {
            iprof.observe(&req.device_model, &req.features, n, t_comp, energy)?;
            maui.observe(n, t_comp, energy)?;
        }
        Ok(())
    }

    /// Protocol step 5.
    pub fn handle_result(&mut self, result: GradientResult) -> Result<ResultOutcome> {
        let clock = self.clock();
        if result.pulled_clock > clock {
            return Err(Error::FutureClock {
                pulled: result.pulled_clock,
                current: clock,
            });
        }
        if self.aggregator.config().rule.policy == DampeningPolicy::Synchronous
            && result.pulled_clock != clock
        {
            self.dropped += 1;
            return Ok(ResultOutcome {
                report: None,
                dropped: true,
            });
        }
        let report = self.aggregator.submit(result)?;
        if report.is_some() {
            if self.snapshots.len() == self.history {
                self.snapshots.pop_front();
            }
            self.snapshots
                .push_back(Arc::new(self.aggregator.model().clone()));
        }
        Ok(ResultOutcome {
            report,
            dropped: false,
        })
    }
}
