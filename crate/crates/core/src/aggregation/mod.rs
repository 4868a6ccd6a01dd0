//! Staleness-aware gradient aggregation.
//!
//! Each incoming gradient is weighted by `min(1, Λ(τ) / sim)` where `τ` is its
//! staleness in model updates, `Λ` a dampening policy and `sim` the
//! Bhattacharyya overlap between the gradient's label distribution and the
//! labels consumed so far. After `K` gradients the model takes one step.

mod aggregator;
mod dampening;
mod labels;
mod perturb;
mod staleness;

pub use aggregator::{
    AggregationRule, Aggregator, AggregatorConfig, Contribution, GradientResult, UpdateReport,
};
pub use dampening::{beta_for, dampening, weight, Dampening, DampeningPolicy};
pub use labels::{bhattacharyya, similarity, LabelDistribution};
pub use perturb::perturb;
pub use staleness::{nearest_rank, StalenessTracker};
