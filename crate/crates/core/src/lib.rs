//! Online federated learning laboratory.
//!
//! The crate is organised bottom-up:
//!
//! - [`model`]: a small dense network (softmax regression or one hidden layer)
//!   with exact backprop and a finite-difference checker.
//! - [`aggregation`]: staleness tracking, dampening policies, label-distribution
//!   similarity and the K-gradient server update.
//! - [`profiler`]: per-request mini-batch bounds under time and energy SLOs
//!   (cold-start least squares plus per-device-model passive-aggressive
//!   regressors) and the through-origin baseline.
//! - [`sim`]: the simulated device fleet, staleness/latency models, dataset
//!   partitioning, IDX loading and the drifting stream.
//! - [`orchestrator`]: the server protocol (admission control, model
//!   distribution, aggregation loop) and the event-driven run loops.
//! - [`experiment`]: declarative experiment configs, presets, metrics CSVs and
//!   run manifests.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod aggregation;
pub mod error;
pub mod experiment;
pub mod model;
pub mod orchestrator;
pub mod profiler;
pub mod rng;
pub mod sim;

pub use aggregation::{
    AggregationRule, Aggregator, AggregatorConfig, DampeningPolicy, GradientResult,
    LabelDistribution, StalenessTracker, UpdateReport,
};
pub use error::{Error, Result};
pub use model::{Activation, Batch, ModelParams, ModelSpec};
pub use profiler::{DeviceFeatures, ProfilerState};
