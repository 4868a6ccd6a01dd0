//! Mini-batch bound prediction under time and energy SLOs.

mod features;
mod maui;
mod ols;
mod pa;
mod state;

pub use features::{DeviceFeatures, PredictorKind, Standardizer};
pub use maui::{maui_bound, maui_fit, maui_predict, MauiState};
pub use ols::{ols_fit, LinearCoefModel, DEFAULT_RIDGE};
pub use pa::{pa_update, PaModel};
pub use state::{bound_from_alphas, LogEntry, ProfilerConfig, ProfilerState, ALPHA_FLOOR};
