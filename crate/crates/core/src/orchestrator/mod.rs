//! The server protocol and the simulation drivers built on it.

mod metrics;
mod run;
mod server;

pub use metrics::{
    EvalPoint, MetricsRow, ProfilerRow, RunOutput, RunSummary, METRICS_COLUMNS, PROFILER_COLUMNS,
};
pub use run::{
    run_controlled, run_stream, run_timed, Cadence, Perturbation, RunSpec, Sizing, StreamWorkload,
    Workload,
};
pub use server::{
    BoundSource, ControllerConfig, Decision, Predictor, Rejection, ResultOutcome, Server,
    ServerConfig, TaskAssignment, TaskRequest, ThresholdMode,
};
