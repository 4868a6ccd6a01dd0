use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::aggregation::{AggregationRule, AggregatorConfig};
use crate::error::{Error, Result};
use crate::model::{Activation, ModelSpec};
use crate::orchestrator::{Cadence, ControllerConfig, Perturbation, RunSpec, Sizing};
use crate::profiler::ProfilerConfig;
use crate::sim::{DriftConfig, StalenessModel};

/// Environment variable naming a directory with the full IDX digit files.
pub const MNIST_DIR_ENV: &str = "ONLINEFL_MNIST_DIR";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetConfig {
    /// IDX digit images. Without `dir` or `files` the bundled sample is used
    /// (or the directory in `ONLINEFL_MNIST_DIR`, when set).
    Mnist {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        dir: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        files: Option<IdxFiles>,
        /// Balanced subset: `train_limit / classes` examples per class.
        #[serde(default = "default_train_limit")]
        train_limit: usize,
        #[serde(default = "default_test_limit")]
        test_limit: usize,
    },
    /// Gaussian class clusters.
    Synthetic {
        num_classes: usize,
        dim: usize,
        train_size: usize,
        test_size: usize,
        #[serde(default = "default_separation")]
        separation: f64,
        #[serde(default = "default_data_seed")]
        data_seed: u64,
    },
    /// Chunked stream whose class centers move; evaluated prequentially.
    Drifting {
        #[serde(default)]
        stream: DriftConfig,
        chunks: u64,
        gradients_per_chunk: u64,
        minibatch: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdxFiles {
    pub train_images: String,
    pub train_labels: String,
    pub test_images: String,
    pub test_labels: String,
}

fn default_train_limit() -> usize {
    10_000
}

fn default_test_limit() -> usize {
    2_000
}

fn default_separation() -> f64 {
    1.0
}

fn default_data_seed() -> u64 {
    7
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PartitionKind {
    /// Two label-sorted shards per user.
    #[default]
    Noniid,
    Iid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyName {
    Adasgd,
    Dynsgd,
    Fedavg,
    Ssgd,
}

impl PolicyName {
    pub fn rule(self) -> AggregationRule {
        match self {
            PolicyName::Adasgd => AggregationRule::adasgd(),
            PolicyName::Dynsgd => AggregationRule::dynsgd(),
            PolicyName::Fedavg => AggregationRule::fedavg(),
            PolicyName::Ssgd => AggregationRule::ssgd(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NamedFleet {
    /// Ten handsets spanning a 7× speed range.
    Test,
    /// Fifteen profiles used for offline pre-training.
    Training,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FleetChoice {
    Named(NamedFleet),
    File { path: String },
}

impl Default for FleetChoice {
    fn default() -> Self {
        FleetChoice::Named(NamedFleet::Test)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    /// Zero selects softmax regression.
    pub hidden_dim: usize,
    pub activation: Activation,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            hidden_dim: 64,
            activation: Activation::Relu,
        }
    }
}

/// `minibatch = 100` or a sizing table such as
/// `{ mode = "gaussian", mean = 100, std = 33 }`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Minibatch {
    Size(u64),
    Mode(Sizing),
}

impl Default for Minibatch {
    fn default() -> Self {
        Minibatch::Size(100)
    }
}

impl Minibatch {
    pub fn sizing(&self) -> Sizing {
        match self {
            Minibatch::Size(n) => Sizing::Fixed { n: *n },
            Minibatch::Mode(s) => s.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProfilerSection {
    pub epsilon_time: f64,
    pub epsilon_energy: f64,
    pub retrain_every: u64,
    pub ridge: f64,
    /// Idle seconds between offline profiling tasks.
    pub offline_gap_s: f64,
    /// Devices swept offline to pre-train the predictors.
    pub offline_fleet: FleetChoice,
}

impl Default for ProfilerSection {
    fn default() -> Self {
        let p = ProfilerConfig::default();
        ProfilerSection {
            epsilon_time: p.epsilon_time,
            epsilon_energy: p.epsilon_energy,
            retrain_every: p.retrain_every,
            ridge: p.ridge,
            offline_gap_s: 30.0,
            offline_fleet: FleetChoice::Named(NamedFleet::Training),
        }
    }
}

impl ProfilerSection {
    pub fn config(&self) -> ProfilerConfig {
        ProfilerConfig {
            epsilon_time: self.epsilon_time,
            epsilon_energy: self.epsilon_energy,
            retrain_every: self.retrain_every,
            ridge: self.ridge,
        }
    }
}

/// One fully specified experiment variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_preset")]
    pub preset: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub description: String,
    /// Distinguishes the variants of one preset in run ids.
    #[serde(default = "default_variant")]
    pub variant: String,
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub partition: PartitionKind,
    pub num_users: usize,
    #[serde(default)]
    pub fleet: FleetChoice,
    #[serde(default)]
    pub model: ModelConfig,
    pub policy: PolicyName,
    /// Overrides whether the similarity weight is applied.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub similarity_boost: Option<bool>,
    #[serde(default = "default_s_percent")]
    pub s_percent: f64,
    #[serde(rename = "K", default = "default_k")]
    pub k: usize,
    pub lr: f64,
    #[serde(default)]
    pub minibatch: Minibatch,
    #[serde(default)]
    pub staleness: StalenessModel,
    #[serde(default)]
    pub controller: ControllerConfig,
    #[serde(default)]
    pub cadence: Cadence,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_eval_every")]
    pub eval_every: u64,
    #[serde(default = "default_max_updates")]
    pub max_updates: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<String>,
    /// Staleness window for the τ threshold.
    #[serde(default = "default_window")]
    pub window: usize,
    #[serde(default = "default_bootstrap")]
    pub bootstrap_len: u64,
    /// Retained model snapshots.
    #[serde(default = "default_history")]
    pub history: usize,
    #[serde(default = "default_local_steps")]
    pub local_steps: u32,
    /// Timed runs: mean requests per second per idle user.
    #[serde(default = "default_arrival_rate")]
    pub arrival_rate: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub requests_per_user: Option<u64>,
    /// Timed runs: fixed wait before a rejected user retries.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub retry_delay_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub perturb: Option<Perturbation>,
    #[serde(default)]
    pub profiler: ProfilerSection,
}

fn default_preset() -> String {
    "custom".into()
}

fn default_variant() -> String {
    "default".into()
}

fn default_s_percent() -> f64 {
    99.7
}

fn default_k() -> usize {
    1
}

fn default_seeds() -> Vec<u64> {
    vec![1]
}

fn default_eval_every() -> u64 {
    50
}

fn default_max_updates() -> u64 {
    1000
}

fn default_window() -> usize {
    1000
}

fn default_bootstrap() -> u64 {
    100
}

fn default_history() -> usize {
    128
}

fn default_local_steps() -> u32 {
    1
}

fn default_arrival_rate() -> f64 {
    1.0
}

/// Which simulation loop executes a config.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Driver {
    /// Step-driven with staleness counted in updates.
    Controlled,
    /// Event-driven in simulated seconds.
    Timed,
    /// Prequential over a drifting stream.
    Stream,
}

fn bad(key: &str, message: impl Into<String>) -> Error {
    Error::config(key, message)
}

fn absolutize(base: Option<&Path>, path: &str) -> String {
    let p = Path::new(path);
    match base {
        Some(b) if p.is_relative() => b.join(p).to_string_lossy().into_owned(),
        _ => path.to_string(),
    }
}

impl ExperimentConfig {
    pub fn driver(&self) -> Driver {
        if matches!(self.dataset, DatasetConfig::Drifting { .. }) {
            Driver::Stream
        } else if matches!(self.minibatch.sizing(), Sizing::Profiler { .. })
            || !self.staleness.is_update_count()
        {
            Driver::Timed
        } else {
            Driver::Controlled
        }
    }

    pub fn rule(&self) -> AggregationRule {
        let mut rule = self.policy.rule();
        if let Some(b) = self.similarity_boost {
            rule.similarity_boost = b;
        }
        rule
    }

    pub fn aggregator(&self) -> AggregatorConfig {
        AggregatorConfig {
            rule: self.rule(),
            k: self.k,
            lr: self.lr,
            window: self.window,
            s_percent: self.s_percent,
            bootstrap_len: self.bootstrap_len,
        }
    }

    /// The driver parameters for one seed, given the data shape.
    pub fn run_spec(&self, seed: u64, input_dim: usize, num_classes: usize) -> RunSpec {
        RunSpec {
            run_id: format!("{}/{}/{}", self.preset, self.variant, seed),
            seed,
            model: ModelSpec {
                input_dim,
                hidden_dim: self.model.hidden_dim,
                num_classes,
                activation: self.model.activation,
            },
            aggregator: self.aggregator(),
            controller: self.controller,
            sizing: self.minibatch.sizing(),
            staleness: self.staleness.clone(),
            cadence: self.cadence,
            eval_every: self.eval_every,
            max_updates: self.max_updates,
            requests_per_user: self.requests_per_user,
            retry_delay_s: self.retry_delay_s,
            arrival_rate: self.arrival_rate,
            perturb: self.perturb,
            local_steps: self.local_steps,
            history: self.history,
        }
    }

    /// Makes relative paths absolute against `base` and pins the digit
    /// source selected through the environment, so the resolved config no
    /// longer depends on where or how it is run.
    pub fn resolve_paths(&mut self, base: Option<&Path>) {
        if let DatasetConfig::Mnist { dir, files, .. } = &mut self.dataset {
            if let Some(f) = files {
                for p in [
                    &mut f.train_images,
                    &mut f.train_labels,
                    &mut f.test_images,
                    &mut f.test_labels,
                ] {
                    *p = absolutize(base, p);
                }
            }
            match dir {
                Some(d) => *d = absolutize(base, d),
                None if files.is_none() => {
                    if let Some(env) = std::env::var_os(MNIST_DIR_ENV).filter(|v| !v.is_empty()) {
                        *dir = Some(PathBuf::from(env).to_string_lossy().into_owned());
                    }
                }
                None => {}
            }
        }
        for fleet in [&mut self.fleet, &mut self.profiler.offline_fleet] {
            if let FleetChoice::File { path } = fleet {
                *path = absolutize(base, path);
            }
        }
    }

    /// Checks every field; errors name the offending key.
    pub fn validate(&self) -> Result<()> {
        if self.preset.is_empty() || self.preset.contains(['/', '\\']) {
            return Err(bad(
                "preset",
                "must be a non-empty name without path separators",
            ));
        }
        if self.variant.is_empty() || self.variant.contains(['/', '\\']) {
            return Err(bad(
                "variant",
                "must be a non-empty name without path separators",
            ));
        }
        match &self.dataset {
            DatasetConfig::Mnist {
                dir,
                files,
                train_limit,
                test_limit,
            } => {
                if dir.is_some() && files.is_some() {
                    return Err(bad("dataset", "give either `dir` or `files`, not both"));
                }
                if *train_limit == 0 || *test_limit == 0 {
                    return Err(bad("dataset.train_limit", "limits must be positive"));
                }
            }
            DatasetConfig::Synthetic {
                num_classes,
                dim,
                train_size,
                test_size,
                separation,
                ..
            } => {
                if *num_classes < 2 || *dim == 0 {
                    return Err(bad("dataset.num_classes", "need ≥ 2 classes and dim ≥ 1"));
                }
                if *train_size == 0 || *test_size == 0 {
                    return Err(bad("dataset.train_size", "sizes must be positive"));
                }
                if !(separation.is_finite() && *separation > 0.0) {
                    return Err(bad("dataset.separation", "must be positive"));
                }
            }
            DatasetConfig::Drifting {
                stream,
                chunks,
                gradients_per_chunk,
                minibatch,
            } => {
                stream
                    .validate()
                    .map_err(|e| bad("dataset.stream", e.to_string()))?;
                if *chunks == 0 || *gradients_per_chunk == 0 || *minibatch == 0 {
                    return Err(bad(
                        "dataset.chunks",
                        "chunks, gradients_per_chunk and minibatch must be positive",
                    ));
                }
            }
        }
        let drifting = matches!(self.dataset, DatasetConfig::Drifting { .. });
        if self.num_users == 0 && !drifting {
            return Err(bad("num_users", "must be positive"));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(bad("lr", "must be positive and finite"));
        }
        if self.k == 0 {
            return Err(bad("K", "must be positive"));
        }
        if !(self.s_percent > 0.0 && self.s_percent <= 100.0) {
            return Err(bad("s_percent", "must lie in (0, 100]"));
        }
        if self.seeds.is_empty() {
            return Err(bad("seeds", "need at least one seed"));
        }
        if self.eval_every == 0 {
            return Err(bad("eval_every", "must be positive"));
        }
        if self.max_updates == 0 {
            return Err(bad("max_updates", "must be positive"));
        }
        if self.window == 0 {
            return Err(bad("window", "must be positive"));
        }
        if self.history == 0 {
            return Err(bad("history", "must be positive"));
        }
        if self.local_steps == 0 {
            return Err(bad("local_steps", "must be positive"));
        }
        if !(self.arrival_rate.is_finite() && self.arrival_rate > 0.0) {
            return Err(bad("arrival_rate", "must be positive"));
        }
        if self.requests_per_user == Some(0) {
            return Err(bad("requests_per_user", "must be positive when set"));
        }
        if self
            .retry_delay_s
            .is_some_and(|d| !(d.is_finite() && d >= 0.0))
        {
            return Err(bad("retry_delay_s", "must be non-negative"));
        }
        if self.model.hidden_dim > 100_000 {
            return Err(bad("model.hidden_dim", "unreasonably large"));
        }
        let sizing = self.minibatch.sizing();
        match &sizing {
            Sizing::Fixed { n } if *n == 0 => return Err(bad("minibatch", "must be positive")),
            Sizing::PerUser { sizes } if sizes.is_empty() || sizes.contains(&0) => {
                return Err(bad("minibatch.sizes", "need at least one positive size"))
            }
            Sizing::Gaussian { mean, std }
                if !(mean.is_finite() && std.is_finite() && *std >= 0.0) =>
            {
                return Err(bad("minibatch.std", "need a finite mean and std ≥ 0"))
            }
            _ => {}
        }
        self.staleness
            .validate()
            .map_err(|e| bad("staleness", e.to_string()))?;
        if let StalenessModel::GaussianLongTail { tail_labels, .. } = &self.staleness {
            if tail_labels.is_empty() {
                return Err(bad("staleness.tail_labels", "need at least one label"));
            }
        }
        self.controller
            .size_threshold
            .validate("size")
            .map_err(|e| bad("controller.size_threshold", e.to_string()))?;
        self.controller
            .sim_threshold
            .validate("similarity")
            .map_err(|e| bad("controller.sim_threshold", e.to_string()))?;
        if !(self.controller.t_slo > 0.0 && self.controller.e_slo > 0.0) {
            return Err(bad("controller.t_slo", "SLOs must be positive"));
        }
        if let Some(p) = self.perturb {
            if !(p.clip_norm.is_finite() && p.clip_norm > 0.0) {
                return Err(bad("perturb.clip_norm", "must be positive"));
            }
            if !(p.sigma.is_finite() && p.sigma >= 0.0) {
                return Err(bad("perturb.sigma", "must be non-negative"));
            }
        }
        let p = &self.profiler;
        if !(p.epsilon_time >= 0.0 && p.epsilon_energy >= 0.0) {
            return Err(bad(
                "profiler.epsilon_time",
                "tolerances must be non-negative",
            ));
        }
        if p.retrain_every == 0 {
            return Err(bad("profiler.retrain_every", "must be positive"));
        }
        if !(p.ridge >= 0.0 && p.ridge.is_finite()) {
            return Err(bad("profiler.ridge", "must be non-negative"));
        }
        if !(p.offline_gap_s >= 0.0 && p.offline_gap_s.is_finite()) {
            return Err(bad("profiler.offline_gap_s", "must be non-negative"));
        }
        match (self.driver(), self.cadence) {
            (Driver::Stream, Cadence::Batched { period: 0 }) => {
                return Err(bad("cadence.period", "must be positive"))
            }
            (Driver::Stream, Cadence::Batched { .. }) if self.policy == PolicyName::Ssgd => {
                return Err(bad("cadence", "batched cadence cannot use the ssgd policy"))
            }
            (Driver::Stream, _) | (_, Cadence::Online) => {}
            _ => return Err(bad("cadence", "batched cadence needs a drifting dataset")),
        }
        if drifting && matches!(sizing, Sizing::Profiler { .. }) {
            return Err(bad(
                "minibatch",
                "profiler sizing needs a static dataset and a fleet",
            ));
        }
        if drifting && !matches!(self.staleness, StalenessModel::None) {
            return Err(bad(
                "staleness",
                "the drifting stream has no staleness model",
            ));
        }
        if self.driver() == Driver::Timed
            && matches!(
                self.staleness,
                StalenessModel::Gaussian { .. } | StalenessModel::GaussianLongTail { .. }
            )
        {
            return Err(bad(
                "staleness",
                "update-count staleness cannot combine with profiler sizing; use exponential_latency or none",
            ));
        }
        Ok(())
    }
}
