use serde::Serialize;

/// Header of the training log, in column order.
pub const METRICS_COLUMNS: [&str; 16] = [
    "run_id",
    "seed",
    "event",
    "update_index",
    "sim_time",
    "policy",
    "test_accuracy",
    "per_class_recall",
    "tau",
    "lambda",
    "sim",
    "weight",
    "batch_size",
    "dropped_results",
    "tau_thres",
    "gradients",
];

/// Header of the profiler log, in column order.
pub const PROFILER_COLUMNS: [&str; 10] = [
    "request_index",
    "device_model",
    "predicted_n",
    "t_slo",
    "e_slo",
    "actual_t",
    "actual_e",
    "deviation_t",
    "deviation_e",
    "predictor",
];

/// One row of the training log. `event` is `eval` or `update`; update rows
/// carry one contribution each, so K > 1 yields K rows per update index.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsRow {
    pub run_id: String,
    pub seed: u64,
    pub event: &'static str,
    pub update_index: u64,
    pub sim_time: f64,
    pub policy: &'static str,
    pub test_accuracy: Option<f64>,
    /// Semicolon-separated, one entry per class; `NaN` for absent classes.
    pub per_class_recall: Option<String>,
    pub tau: Option<u64>,
    pub lambda: Option<f64>,
    pub sim: Option<f64>,
    pub weight: Option<f64>,
    pub batch_size: Option<usize>,
    pub dropped_results: u64,
    pub tau_thres: Option<f64>,
    /// Gradients computed so far.
    pub gradients: u64,
}

/// One completed profiled task.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProfilerRow {
    pub request_index: u64,
    pub device_model: String,
    pub predicted_n: u64,
    pub t_slo: f64,
    pub e_slo: f64,
    pub actual_t: f64,
    pub actual_e: f64,
    pub deviation_t: f64,
    pub deviation_e: f64,
    pub predictor: &'static str,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalPoint {
    pub update_index: u64,
    pub gradients: u64,
    pub sim_time: f64,
    pub accuracy: f64,
    pub per_class_recall: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub run_id: String,
    pub seed: u64,
    pub policy: &'static str,
    pub k: usize,
    pub updates: u64,
    pub gradients: u64,
    pub consumed: u64,
    pub requests: u64,
    pub rejected_small: u64,
    pub rejected_similar: u64,
    pub dropped_results: u64,
    pub evals: Vec<EvalPoint>,
    pub global_label_counts: Vec<u64>,
    /// Column sums of the label counts of every consumed result, tallied by
    /// the driver independently of the aggregator.
    pub consumed_label_sum: Vec<u64>,
}

impl RunSummary {
    pub fn final_accuracy(&self) -> Option<f64> {
        self.evals.last().map(|e| e.accuracy)
    }

    /// First evaluated update index at which accuracy reaches `target`.
    pub fn updates_to_reach(&self, target: f64) -> Option<u64> {
        self.evals
            .iter()
            .find(|e| e.accuracy >= target)
            .map(|e| e.update_index)
    }

    pub fn mean_accuracy(&self) -> f64 {
        if self.evals.is_empty() {
            return f64::NAN;
        }
        self.evals.iter().map(|e| e.accuracy).sum::<f64>() / self.evals.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub metrics: Vec<MetricsRow>,
    pub profiler: Vec<ProfilerRow>,
    pub summary: RunSummary,
}
