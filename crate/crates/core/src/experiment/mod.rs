//! Declarative experiments: TOML configs with variants and overrides, the
//! built-in presets, and the runner that writes per-seed CSVs plus a
//! replayable manifest.
//!
//! A config's top-level keys describe the base experiment; each
//! `[[variants]]` table is merged over it. Every (variant, seed) pair is
//! one simulation; the outputs for a seed land in
//! `<output_dir>/<preset>_<seed>/`.

mod config;
mod plan;
mod presets;
mod runner;

pub use config::{
    DatasetConfig, Driver, ExperimentConfig, FleetChoice, IdxFiles, Minibatch, ModelConfig,
    NamedFleet, PartitionKind, PolicyName, ProfilerSection, MNIST_DIR_ENV,
};
pub use plan::{merge, Override, Plan, ARTIFACT_VERSION};
pub use presets::{preset_table, preset_text, presets};
pub use runner::{
    execute, execute_with, load_dataset, load_fleet_choice, metrics_csv, profiler_csv, run_plan,
    run_seed, write_seed, SeedRun,
};
