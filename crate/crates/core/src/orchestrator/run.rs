use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, Exp, Normal};
use serde::{Deserialize, Serialize};

use crate::aggregation::{perturb, AggregatorConfig, DampeningPolicy, GradientResult};
use crate::error::{Error, Result};
use crate::model::{evaluate, gradient, init_params, Batch, ModelParams, ModelSpec};
use crate::profiler::{DeviceFeatures, MauiState, ProfilerState};
use crate::rng::{self, SimRng};
use crate::sim::{
    next_staleness, Dataset, DeviceProfile, DeviceState, DriftConfig, DriftingStream,
    StalenessDraw, StalenessModel, UserShard,
};

use super::metrics::{EvalPoint, MetricsRow, ProfilerRow, RunOutput, RunSummary};
use super::server::{
    BoundSource, ControllerConfig, Decision, ResultOutcome, Server, ServerConfig, TaskRequest,
};

/// How large a batch each worker is offered before the local-size cap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum Sizing {
    Fixed {
        n: u64,
    },
    /// User `u` gets `sizes[u % len]`.
    PerUser {
        sizes: Vec<u64>,
    },
    /// round(N(mean, std)) clamped to ≥ 1, drawn per request.
    Gaussian {
        mean: f64,
        std: f64,
    },
    /// Predicted from device features under the controller's SLOs. With
    /// `alternate`, odd requests use the device-blind baseline instead.
    Profiler {
        alternate: bool,
    },
}

impl Sizing {
    fn external_bound(&self, user: usize, rng: &mut SimRng) -> Option<u64> {
        match self {
            Sizing::Fixed { n } => Some(*n),
            Sizing::PerUser { sizes } => Some(sizes[user % sizes.len()]),
            Sizing::Gaussian { mean, std } => {
                let x: f64 = Normal::new(*mean, *std).expect("validated").sample(rng);
                Some(x.round().max(1.0) as u64)
            }
            Sizing::Profiler { .. } => None,
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match self {
            Sizing::Fixed { n } => *n > 0,
            Sizing::PerUser { sizes } => !sizes.is_empty() && sizes.iter().all(|&s| s > 0),
            Sizing::Gaussian { mean, std } => mean.is_finite() && std.is_finite() && *std >= 0.0,
            Sizing::Profiler { .. } => true,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "invalid minibatch sizing {self:?}"
            )))
        }
    }
}

/// When gradients reach the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum Cadence {
    /// Each gradient is submitted as soon as it is computed.
    #[default]
    Online,
    /// Gradients are computed against the period-start model and submitted
    /// together at the end of every `period` chunks.
    Batched { period: u64 },
}

/// Clip-and-noise applied by workers before upload.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Perturbation {
    pub clip_norm: f64,
    pub sigma: f64,
}

/// Everything a driver needs besides the data.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSpec {
    pub run_id: String,
    pub seed: u64,
    pub model: ModelSpec,
    pub aggregator: AggregatorConfig,
    pub controller: ControllerConfig,
    pub sizing: Sizing,
    pub staleness: StalenessModel,
    pub cadence: Cadence,
    /// Evaluate every this many model updates.
    pub eval_every: u64,
    pub max_updates: u64,
    /// Timed driver only: requests each user issues before going quiet.
    pub requests_per_user: Option<u64>,
    /// Timed driver only: a rejected user asks again after this many
    /// seconds instead of at its next random arrival.
    pub retry_delay_s: Option<f64>,
    /// Timed driver only: mean requests per second per idle user.
    pub arrival_rate: f64,
    pub perturb: Option<Perturbation>,
    /// Local SGD steps per task; 1 uploads the plain gradient.
    pub local_steps: u32,
    /// Retained model snapshots; older pulls are served the oldest one.
    pub history: usize,
}

impl RunSpec {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.controller.validate()?;
        self.sizing.validate()?;
        self.staleness.validate()?;
        if self.eval_every == 0 {
            return Err(Error::InvalidArgument("eval_every must be positive".into()));
        }
        if self.local_steps == 0 {
            return Err(Error::InvalidArgument(
                "local_steps must be positive".into(),
            ));
        }
        if !(self.arrival_rate > 0.0) {
            return Err(Error::InvalidArgument(
                "arrival_rate must be positive".into(),
            ));
        }
        if self
            .retry_delay_s
            .is_some_and(|d| !(d.is_finite() && d >= 0.0))
        {
            return Err(Error::InvalidArgument(
                "retry_delay_s must be non-negative".into(),
            ));
        }
        if let Some(p) = self.perturb {
            if !(p.clip_norm > 0.0 && p.sigma >= 0.0) {
                return Err(Error::InvalidArgument(
                    "perturbation needs clip_norm > 0 and sigma ≥ 0".into(),
                ));
            }
        }
        if let Cadence::Batched { period } = self.cadence {
            if period == 0 {
                return Err(Error::InvalidArgument(
                    "batched period must be positive".into(),
                ));
            }
            if self.aggregator.rule.policy == DampeningPolicy::Synchronous {
                return Err(Error::InvalidArgument(
                    "batched cadence submits stale results; the synchronous policy would drop them"
                        .into(),
                ));
            }
        }
        Ok(())
    }

    fn server(&self, bounds: BoundSource) -> Result<Server> {
        let model = init_params(self.model, rng::derive_seed(self.seed, "init", 0))?;
        Server::new(
            model,
            ServerConfig {
                aggregator: self.aggregator,
                controller: self.controller,
                history: self.history,
            },
            bounds,
        )
    }
}

/// Partitioned data and the devices that hold it. User `u` runs on
/// `devices[u % devices.len()]`.
#[derive(Debug, Clone)]
pub struct Workload<'a> {
    pub train: &'a Dataset,
    pub test: &'a Dataset,
    pub shards: Vec<UserShard>,
    pub devices: Vec<DeviceProfile>,
}

impl Workload<'_> {
    fn check(&self, spec: &RunSpec) -> Result<()> {
        if self.train.dim != spec.model.input_dim || self.test.dim != spec.model.input_dim {
            return Err(Error::DimensionMismatch {
                what: "dataset dimension",
                expected: spec.model.input_dim,
                found: self.train.dim,
            });
        }
        if self.train.num_classes > spec.model.num_classes {
            return Err(Error::InvalidArgument(
                "dataset has more classes than the model".into(),
            ));
        }
        if self.shards.iter().any(|s| s.indices.is_empty()) {
            return Err(Error::InvalidArgument("every user needs local data".into()));
        }
        Ok(())
    }

    fn features(&self, user: usize) -> (String, DeviceFeatures) {
        match self.devices.get(user % self.devices.len().max(1)) {
            Some(d) => (d.device_model.clone(), d.feature_base),
            None => (
                "generic".into(),
                DeviceFeatures {
                    avail_mem: 1024.0,
                    total_mem: 2048.0,
                    temperature: 25.0,
                    cpu_freq_sum: 8000.0,
                    energy_per_cpu_time: 0.02,
                },
            ),
        }
    }
}

/// Drifting-stream workload for the cadence comparison.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StreamWorkload {
    pub stream: DriftConfig,
    pub chunks: u64,
    pub gradients_per_chunk: u64,
    pub minibatch: usize,
}

fn recall_string(recall: &[f64]) -> String {
    recall
        .iter()
        .map(|r| r.to_string())
        .collect::<Vec<_>>()
        .join(";")
}

/// Logging and bookkeeping shared by the drivers.
struct Recorder<'a> {
    spec: &'a RunSpec,
    policy: &'static str,
    rows: Vec<MetricsRow>,
    evals: Vec<EvalPoint>,
    gradients: u64,
    pending_counts: Vec<Vec<u64>>,
    consumed_sum: Vec<u64>,
}

impl<'a> Recorder<'a> {
    fn new(spec: &'a RunSpec) -> Self {
        Recorder {
            spec,
            policy: spec.aggregator.rule.name(),
            rows: Vec::new(),
            evals: Vec::new(),
            gradients: 0,
            pending_counts: Vec::new(),
            consumed_sum: vec![0; spec.model.num_classes],
        }
    }

    fn row(
        &self,
        event: &'static str,
        update_index: u64,
        sim_time: f64,
        dropped: u64,
    ) -> MetricsRow {
        MetricsRow {
            run_id: self.spec.run_id.clone(),
            seed: self.spec.seed,
            event,
            update_index,
            sim_time,
            policy: self.policy,
            test_accuracy: None,
            per_class_recall: None,
            tau: None,
            lambda: None,
            sim: None,
            weight: None,
            batch_size: None,
            dropped_results: dropped,
            tau_thres: None,
            gradients: self.gradients,
        }
    }

    fn eval(
        &mut self,
        server: &Server,
        sim_time: f64,
        features: &[f64],
        labels: &[usize],
    ) -> Result<()> {
        let model = server.current();
        let ev = evaluate(&model, features, labels)?;
        let mut row = self.row("eval", model.clock, sim_time, server.dropped_results());
        row.test_accuracy = Some(ev.accuracy);
        row.per_class_recall = Some(recall_string(&ev.per_class_recall));
        self.rows.push(row);
        self.evals.push(EvalPoint {
            update_index: model.clock,
            gradients: self.gradients,
            sim_time,
            accuracy: ev.accuracy,
            per_class_recall: ev.per_class_recall,
        });
        Ok(())
    }

    /// Logs the outcome of a submission; returns whether the model advanced.
    fn submitted(
        &mut self,
        counts: Vec<u64>,
        outcome: &ResultOutcome,
        server: &Server,
        sim_time: f64,
    ) -> bool {
        if outcome.dropped {
            return false;
        }
        self.pending_counts.push(counts);
        let Some(report) = &outcome.report else {
            return false;
        };
        for counts in self.pending_counts.drain(..) {
            for (s, c) in self.consumed_sum.iter_mut().zip(counts) {
                *s += c;
            }
        }
        for c in &report.contributions {
            let mut row = self.row(
                "update",
                report.update_index,
                sim_time,
                server.dropped_results(),
            );
            row.tau = Some(c.tau);
            row.lambda = Some(c.lambda);
            row.sim = Some(c.sim);
            row.weight = Some(c.weight);
            row.batch_size = Some(c.batch_size);
            row.tau_thres = report.tau_thres;
            self.rows.push(row);
        }
        true
    }

    fn finish(self, server: &Server, requests: u64, profiler: Vec<ProfilerRow>) -> RunOutput {
        let agg = server.aggregator();
        let (small, similar) = server.rejections();
        RunOutput {
            summary: RunSummary {
                run_id: self.spec.run_id.clone(),
                seed: self.spec.seed,
                policy: self.policy,
                k: agg.config().k,
                updates: agg.clock(),
                gradients: self.gradients,
                consumed: agg.consumed(),
                requests,
                rejected_small: small,
                rejected_similar: similar,
                dropped_results: server.dropped_results(),
                evals: self.evals,
                global_label_counts: agg.global_label_counts().to_vec(),
                consumed_label_sum: self.consumed_sum,
            },
            metrics: self.rows,
            profiler,
        }
    }
}

/// Computes what a worker uploads: the plain gradient, or for several local
/// steps the accumulated displacement divided by the learning rate.
fn worker_update(
    snapshot: &ModelParams,
    batch: &Batch,
    lr: f64,
    local_steps: u32,
) -> Result<Vec<f64>> {
    if local_steps <= 1 {
        return gradient(snapshot, batch);
    }
    let mut local = snapshot.clone();
    for _ in 0..local_steps {
        let g = gradient(&local, batch)?;
        local.step(&g, lr)?;
    }
    Ok(snapshot
        .values
        .iter()
        .zip(&local.values)
        .map(|(a, b)| (a - b) / lr)
        .collect())
}

fn sample_batch(data: &Dataset, pool: &[usize], n: u64, rng: &mut SimRng) -> Result<Batch> {
    let n = (n as usize).min(pool.len());
    let mut picked: Vec<usize> = index::sample(rng, pool.len(), n)
        .into_iter()
        .map(|i| pool[i])
        .collect();
    picked.sort_unstable();
    data.batch(&picked)
}

fn finish_result(
    spec: &RunSpec,
    worker: usize,
    snapshot: &ModelParams,
    batch: &Batch,
    noise_rng: &mut SimRng,
) -> Result<GradientResult> {
    let grad = worker_update(snapshot, batch, spec.aggregator.lr, spec.local_steps)?;
    let result = GradientResult {
        worker_id: worker as u64,
        pulled_clock: snapshot.clock,
        grad,
        batch_size: batch.len(),
        label_counts: batch.label_counts(spec.model.num_classes),
    };
    match spec.perturb {
        Some(p) => perturb(&result, p.clip_norm, p.sigma, noise_rng),
        None => Ok(result),
    }
}

/// Step-driven loop with controlled staleness: each accepted task draws τ
/// from the staleness model and computes its gradient on the snapshot τ
/// updates old (capped by the clock and the retained history). Requests
/// arrive from uniformly chosen users; `sim_time` counts requests.
pub fn run_controlled(spec: &RunSpec, work: &Workload<'_>) -> Result<RunOutput> {
    spec.validate()?;
    work.check(spec)?;
    if !spec.staleness.is_update_count() {
        return Err(Error::InvalidArgument(
            "latency-based staleness needs the timed driver".into(),
        ));
    }
    if matches!(spec.sizing, Sizing::Profiler { .. }) {
        return Err(Error::InvalidArgument(
            "profiler sizing needs the timed driver".into(),
        ));
    }
    let mut server = spec.server(BoundSource::External)?;
    let mut rec = Recorder::new(spec);
    rec.eval(&server, 0.0, &work.test.features, &work.test.labels)?;
    let users = work.shards.len();
    let local_counts: Vec<Vec<u64>> = work
        .shards
        .iter()
        .map(|s| s.label_counts(&work.train.labels, spec.model.num_classes))
        .collect();
    let mut r_arrival = rng::stream(spec.seed, "arrivals");
    let mut r_size = rng::stream(spec.seed, "sizing");
    let mut r_batch = rng::stream(spec.seed, "minibatch");
    let mut r_stale = rng::stream(spec.seed, "staleness");
    let mut r_noise = rng::stream(spec.seed, "perturb");
    let synchronous = spec.aggregator.rule.policy == DampeningPolicy::Synchronous;
    let cap = spec
        .max_updates
        .saturating_mul(spec.aggregator.k as u64)
        .saturating_mul(50)
        + 1000;
    let mut requests = 0u64;
    while users > 0 && server.clock() < spec.max_updates && requests < cap {
        requests += 1;
        let u = r_arrival.random_range(0..users);
        let (device_model, features) = work.features(u);
        let req = TaskRequest {
            worker_id: u as u64,
            device_model,
            features,
            local_label_counts: local_counts[u].clone(),
            local_size: work.shards[u].indices.len() as u64,
        };
        let bound = spec.sizing.external_bound(u, &mut r_size);
        let assignment = match server.handle_request(&req, bound)? {
            Decision::Accept(a) => a,
            Decision::Reject(_) => continue,
        };
        let batch = sample_batch(
            work.train,
            &work.shards[u].indices,
            assignment.minibatch_n,
            &mut r_batch,
        )?;
        let counts = batch.label_counts(spec.model.num_classes);
        let tau = if synchronous {
            0
        } else {
            match next_staleness(&spec.staleness, &counts, &mut r_stale) {
                StalenessDraw::Updates(t) => t,
                StalenessDraw::Latency(_) => unreachable!("checked above"),
            }
        };
        let snapshot = server.snapshot_back(tau);
        let result = finish_result(spec, u, &snapshot, &batch, &mut r_noise)?;
        rec.gradients += 1;
        let outcome = server.handle_result(result)?;
        if rec.submitted(counts, &outcome, &server, requests as f64)
            && server.clock() % spec.eval_every == 0
        {
            rec.eval(
                &server,
                requests as f64,
                &work.test.features,
                &work.test.labels,
            )?;
        }
    }
    if rec.evals.last().map(|e| e.update_index) != Some(server.clock()) {
        rec.eval(
            &server,
            requests as f64,
            &work.test.features,
            &work.test.labels,
        )?;
    }
    Ok(rec.finish(&server, requests, Vec::new()))
}

struct Pending {
    request_index: u64,
    req: TaskRequest,
    n: u64,
    predicted_n: u64,
    predictor: &'static str,
    t_comp: f64,
    energy: f64,
    result: GradientResult,
    counts: Vec<u64>,
}

enum EventKind {
    Arrival(usize),
    Done(usize, Box<Pending>),
}

struct Event {
    time: f64,
    seq: u64,
    kind: EventKind,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Event {}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Event {
    // Reversed: BinaryHeap pops the earliest (time, seq) first.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .time
            .total_cmp(&self.time)
            .then(other.seq.cmp(&self.seq))
    }
}

struct Queue {
    heap: BinaryHeap<Event>,
    seq: u64,
}

impl Queue {
    fn push(&mut self, time: f64, kind: EventKind) {
        self.heap.push(Event {
            time,
            seq: self.seq,
            kind,
        });
        self.seq += 1;
    }
}

/// Event-driven loop in simulated seconds. Idle users issue requests after
/// exponential think times; accepted tasks run on the simulated device and
/// their results arrive after the compute time plus any sampled network
/// latency. Staleness is whatever number of updates happened meanwhile.
/// Profiled sizing needs both predictors, usually pre-trained offline.
pub fn run_timed(
    spec: &RunSpec,
    work: &Workload<'_>,
    predictors: Option<(ProfilerState, MauiState)>,
) -> Result<RunOutput> {
    spec.validate()?;
    work.check(spec)?;
    if work.devices.is_empty() {
        return Err(Error::InvalidArgument(
            "the timed driver needs a device fleet".into(),
        ));
    }
    if matches!(
        spec.staleness,
        StalenessModel::Gaussian { .. } | StalenessModel::GaussianLongTail { .. }
    ) {
        return Err(Error::InvalidArgument(
            "update-count staleness models need the controlled driver".into(),
        ));
    }
    let bounds = match (&spec.sizing, predictors) {
        (Sizing::Profiler { alternate }, Some((p, maui))) => BoundSource::Profiled {
            iprof: Box::new(p),
            maui,
            alternate: *alternate,
        },
        (Sizing::Profiler { .. }, None) => {
            return Err(Error::InvalidArgument(
                "profiler sizing needs a profiler".into(),
            ))
        }
        _ => BoundSource::External,
    };
    let mut server = spec.server(bounds)?;
    let mut rec = Recorder::new(spec);
    rec.eval(&server, 0.0, &work.test.features, &work.test.labels)?;
    let users = work.shards.len();
    let local_counts: Vec<Vec<u64>> = work
        .shards
        .iter()
        .map(|s| s.label_counts(&work.train.labels, spec.model.num_classes))
        .collect();
    let mut devices: Vec<DeviceState> = (0..users)
        .map(|u| DeviceState::new(work.devices[u % work.devices.len()].clone()))
        .collect();
    let think = Exp::new(spec.arrival_rate).expect("validated");
    let mut r_arrival = rng::stream(spec.seed, "arrivals");
    let mut r_size = rng::stream(spec.seed, "sizing");
    let mut r_batch = rng::stream(spec.seed, "minibatch");
    let mut r_latency = rng::stream(spec.seed, "staleness");
    let mut r_noise = rng::stream(spec.seed, "perturb");
    let mut device_rngs: Vec<SimRng> = (0..users)
        .map(|u| rng::indexed_stream(spec.seed, "device", u as u64))
        .collect();
    let mut issued = vec![0u64; users];
    let mut queue = Queue {
        heap: BinaryHeap::new(),
        seq: 0,
    };
    for u in 0..users {
        let t = think.sample(&mut r_arrival);
        queue.push(t, EventKind::Arrival(u));
    }
    let limit = spec.requests_per_user.unwrap_or(u64::MAX);
    let (t_slo, e_slo) = (spec.controller.t_slo, spec.controller.e_slo);
    let mut requests = 0u64;
    let mut profiler_rows = Vec::new();
    let mut now = 0.0;
    while let Some(ev) = queue.heap.pop() {
        if server.clock() >= spec.max_updates {
            break;
        }
        now = ev.time;
        match ev.kind {
            EventKind::Arrival(u) => {
                if issued[u] >= limit {
                    continue;
                }
                issued[u] += 1;
                let request_index = requests;
                requests += 1;
                devices[u].cool_to(now);
                let req = TaskRequest {
                    worker_id: u as u64,
                    device_model: devices[u].profile.device_model.clone(),
                    features: devices[u].features(),
                    local_label_counts: local_counts[u].clone(),
                    local_size: work.shards[u].indices.len() as u64,
                };
                let bound = spec.sizing.external_bound(u, &mut r_size);
                let a = match server.handle_request(&req, bound)? {
                    Decision::Accept(a) => a,
                    Decision::Reject(_) => {
                        let t = now
                            + spec
                                .retry_delay_s
                                .unwrap_or_else(|| think.sample(&mut r_arrival));
                        queue.push(t, EventKind::Arrival(u));
                        continue;
                    }
                };
                let batch = sample_batch(
                    work.train,
                    &work.shards[u].indices,
                    a.minibatch_n,
                    &mut r_batch,
                )?;
                let counts = batch.label_counts(spec.model.num_classes);
                let result = finish_result(spec, u, &a.model, &batch, &mut r_noise)?;
                rec.gradients += 1;
                let n = batch.len() as u64;
                let task = devices[u].simulate_task(now, n, &mut device_rngs[u]);
                let latency = match next_staleness(&spec.staleness, &counts, &mut r_latency) {
                    StalenessDraw::Latency(l) => l,
                    StalenessDraw::Updates(_) => 0.0,
                };
                let pending = Pending {
                    request_index,
                    req,
                    n,
                    predicted_n: a.predicted_n,
                    predictor: a.predictor.map_or("fixed", |p| p.name()),
                    t_comp: task.t_comp,
                    energy: task.energy,
                    result,
                    counts,
                };
                queue.push(
                    now + task.t_comp + latency,
                    EventKind::Done(u, Box::new(pending)),
                );
            }
            EventKind::Done(u, p) => {
                let p = *p;
                server.observe_task(&p.req, p.n, p.t_comp, p.energy)?;
                if matches!(spec.sizing, Sizing::Profiler { .. }) {
                    profiler_rows.push(ProfilerRow {
                        request_index: p.request_index,
                        device_model: p.req.device_model.clone(),
                        predicted_n: p.predicted_n,
                        t_slo,
                        e_slo,
                        actual_t: p.t_comp,
                        actual_e: p.energy,
                        deviation_t: (p.t_comp - t_slo).abs(),
                        deviation_e: (p.energy - e_slo).abs(),
                        predictor: p.predictor,
                    });
                }
                let outcome = server.handle_result(p.result)?;
                if rec.submitted(p.counts, &outcome, &server, now)
                    && server.clock() % spec.eval_every == 0
                {
                    rec.eval(&server, now, &work.test.features, &work.test.labels)?;
                }
                let t = now + think.sample(&mut r_arrival);
                queue.push(t, EventKind::Arrival(u));
            }
        }
    }
    if rec.evals.last().map(|e| e.update_index) != Some(server.clock()) {
        rec.eval(&server, now, &work.test.features, &work.test.labels)?;
    }
    profiler_rows.sort_by_key(|r| r.request_index);
    Ok(rec.finish(&server, requests, profiler_rows))
}

/// Prequential loop over a drifting stream. Each chunk is first used to
/// evaluate the current model and then supplies `gradients_per_chunk`
/// minibatches. Online cadence submits each gradient immediately; batched
/// cadence computes against the period-start model and submits at period
/// end. `sim_time` is the chunk index.
pub fn run_stream(spec: &RunSpec, work: &StreamWorkload) -> Result<RunOutput> {
    spec.validate()?;
    if work.stream.dim != spec.model.input_dim || work.stream.num_classes != spec.model.num_classes
    {
        return Err(Error::InvalidArgument(
            "stream shape does not match the model".into(),
        ));
    }
    if work.minibatch == 0 {
        return Err(Error::InvalidArgument("minibatch must be positive".into()));
    }
    let mut server = spec.server(BoundSource::External)?;
    let mut rec = Recorder::new(spec);
    let mut stream = DriftingStream::new(work.stream, spec.seed)?;
    let mut r_batch = rng::stream(spec.seed, "minibatch");
    let mut r_noise = rng::stream(spec.seed, "perturb");
    let mut period_model = server.current();
    let mut buffer: Vec<GradientResult> = Vec::new();
    for c in 0..work.chunks {
        let chunk = stream.next_chunk()?;
        if c > 0 {
            rec.eval(&server, c as f64, chunk.features(), chunk.labels())?;
        }
        let pool: Vec<usize> = (0..chunk.len()).collect();
        let chunk_data = Dataset::new(
            chunk.features().to_vec(),
            chunk.labels().to_vec(),
            chunk.dim(),
            spec.model.num_classes,
        )?;
        for g in 0..work.gradients_per_chunk {
            let batch = sample_batch(&chunk_data, &pool, work.minibatch as u64, &mut r_batch)?;
            let worker = g as usize;
            match spec.cadence {
                Cadence::Online => {
                    let snapshot = server.current();
                    let result = finish_result(spec, worker, &snapshot, &batch, &mut r_noise)?;
                    rec.gradients += 1;
                    let counts = result.label_counts.clone();
                    let outcome = server.handle_result(result)?;
                    rec.submitted(counts, &outcome, &server, c as f64);
                }
                Cadence::Batched { .. } => {
                    let result = finish_result(spec, worker, &period_model, &batch, &mut r_noise)?;
                    rec.gradients += 1;
                    buffer.push(result);
                }
            }
        }
        if let Cadence::Batched { period } = spec.cadence {
            if (c + 1) % period == 0 || c + 1 == work.chunks {
                for result in buffer.drain(..) {
                    let counts = result.label_counts.clone();
                    let outcome = server.handle_result(result)?;
                    rec.submitted(counts, &outcome, &server, c as f64);
                }
                period_model = server.current();
            }
        }
    }
    Ok(rec.finish(&server, work.chunks * work.gradients_per_chunk, Vec::new()))
}
