use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::orchestrator::{
    run_controlled, run_stream, run_timed, RunOutput, Sizing, StreamWorkload, Workload,
    METRICS_COLUMNS, PROFILER_COLUMNS,
};
use crate::profiler::{MauiState, ProfilerState};
use crate::rng;
use crate::sim::{
    bundled_digits, gaussian_clusters, load_fleet, load_idx, load_idx_dir, offline_sweep,
    partition_iid, partition_noniid, test_fleet, training_fleet, Dataset, DeviceProfile,
};

use super::config::{
    DatasetConfig, Driver, ExperimentConfig, FleetChoice, NamedFleet, PartitionKind,
};
use super::plan::Plan;

/// Loads the train and test sets of a static dataset config.
pub fn load_dataset(cfg: &DatasetConfig) -> Result<(Dataset, Dataset)> {
    match cfg {
        DatasetConfig::Mnist {
            dir,
            files,
            train_limit,
            test_limit,
        } => {
            let (train, test) = match (dir, files) {
                (_, Some(f)) => (
                    load_idx(&f.train_images, &f.train_labels)?,
                    load_idx(&f.test_images, &f.test_labels)?,
                ),
                (Some(d), None) => load_idx_dir(d)?,
                (None, None) => bundled_digits()?,
            };
            Ok((limit(train, *train_limit), limit(test, *test_limit)))
        }
        DatasetConfig::Synthetic {
            num_classes,
            dim,
            train_size,
            test_size,
            separation,
            data_seed,
        } => {
            let all = gaussian_clusters(
                *num_classes,
                *dim,
                train_size + test_size,
                *separation,
                *data_seed,
            )?;
            Ok(all.split_at(*train_size))
        }
        DatasetConfig::Drifting { .. } => Err(Error::config(
            "dataset",
            "the drifting stream is generated per run, not loaded",
        )),
    }
}

/// Keeps a class-balanced prefix of at most `max` examples.
fn limit(data: Dataset, max: usize) -> Dataset {
    if data.len() <= max {
        data
    } else {
        data.take_per_class((max / data.num_classes).max(1))
    }
}

pub fn load_fleet_choice(choice: &FleetChoice) -> Result<Vec<DeviceProfile>> {
    match choice {
        FleetChoice::Named(NamedFleet::Test) => Ok(test_fleet()),
        FleetChoice::Named(NamedFleet::Training) => Ok(training_fleet()),
        FleetChoice::File { path } => load_fleet(path),
    }
}

/// Runs one variant for one seed on already loaded data.
pub fn execute_with(
    cfg: &ExperimentConfig,
    seed: u64,
    data: Option<&(Dataset, Dataset)>,
) -> Result<RunOutput> {
    cfg.validate()?;
    if let DatasetConfig::Drifting {
        stream,
        chunks,
        gradients_per_chunk,
        minibatch,
    } = &cfg.dataset
    {
        let spec = cfg.run_spec(seed, stream.dim, stream.num_classes);
        let work = StreamWorkload {
            stream: *stream,
            chunks: *chunks,
            gradients_per_chunk: *gradients_per_chunk,
            minibatch: *minibatch,
        };
        return run_stream(&spec, &work);
    }
    let loaded;
    let (train, test) = match data {
        Some(d) => d,
        None => {
            loaded = load_dataset(&cfg.dataset)?;
            &loaded
        }
    };
    let classes = train.num_classes.max(test.num_classes);
    let spec = cfg.run_spec(seed, train.dim, classes);
    let shards = match cfg.partition {
        PartitionKind::Noniid => partition_noniid(&train.labels, cfg.num_users, seed)?,
        PartitionKind::Iid => partition_iid(train.len(), cfg.num_users, seed)?,
    };
    let work = Workload {
        train,
        test,
        shards,
        devices: load_fleet_choice(&cfg.fleet)?,
    };
    match cfg.driver() {
        Driver::Controlled => run_controlled(&spec, &work),
        Driver::Timed => {
            let profiler = match spec.sizing {
                Sizing::Profiler { .. } => {
                    let offline = offline_sweep(
                        &load_fleet_choice(&cfg.profiler.offline_fleet)?,
                        cfg.controller.t_slo,
                        cfg.controller.e_slo,
                        cfg.profiler.offline_gap_s,
                        rng::derive_seed(seed, "offline", 0),
                    );
                    let maui = MauiState::from_log(&offline)?;
                    Some((
                        ProfilerState::pretrain(cfg.profiler.config(), offline)?,
                        maui,
                    ))
                }
                _ => None,
            };
            run_timed(&spec, &work, profiler)
        }
        Driver::Stream => unreachable!("handled above"),
    }
}

pub fn execute(cfg: &ExperimentConfig, seed: u64) -> Result<RunOutput> {
    execute_with(cfg, seed, None)
}

/// Runs every variant of `plan` for `seed`, loading each distinct dataset
/// once.
pub fn run_seed(plan: &Plan, seed: u64) -> Result<Vec<RunOutput>> {
    let mut cache: Option<(DatasetConfig, (Dataset, Dataset))> = None;
    let mut outputs = Vec::with_capacity(plan.variants.len());
    for cfg in &plan.variants {
        if matches!(cfg.dataset, DatasetConfig::Drifting { .. }) {
            outputs.push(execute_with(cfg, seed, None)?);
            continue;
        }
        if cache.as_ref().map(|(c, _)| c) != Some(&cfg.dataset) {
            cache = Some((cfg.dataset.clone(), load_dataset(&cfg.dataset)?));
        }
        let data = cache.as_ref().map(|(_, d)| d);
        outputs.push(execute_with(cfg, seed, data)?);
    }
    Ok(outputs)
}

fn csv_bytes<R: Serialize>(columns: &[&str], rows: impl Iterator<Item = R>) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(Vec::new());
    w.write_record(columns)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.into_inner()
        .map_err(|e| Error::InvalidArgument(format!("csv buffer: {e}")))
}

/// The training log of all variants, as CSV.
pub fn metrics_csv(outputs: &[RunOutput]) -> Result<Vec<u8>> {
    csv_bytes(
        &METRICS_COLUMNS,
        outputs.iter().flat_map(|o| o.metrics.iter()),
    )
}

/// The profiler log of all variants, as CSV (header only when no variant
/// used profiled sizing).
pub fn profiler_csv(outputs: &[RunOutput]) -> Result<Vec<u8>> {
    csv_bytes(
        &PROFILER_COLUMNS,
        outputs.iter().flat_map(|o| o.profiler.iter()),
    )
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Writes `<out_root>/<preset>_<seed>/{metrics.csv, profiler.csv,
/// manifest.toml}` and returns the directory.
pub fn write_seed(
    plan: &Plan,
    seed: u64,
    outputs: &[RunOutput],
    out_root: &Path,
) -> Result<PathBuf> {
    let dir = out_root.join(plan.run_dir_name(seed));
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    write(&dir.join("metrics.csv"), &metrics_csv(outputs)?)?;
    write(&dir.join("profiler.csv"), &profiler_csv(outputs)?)?;
    write(&dir.join("manifest.toml"), plan.manifest(seed)?.as_bytes())?;
    Ok(dir)
}

/// One seed's finished runs and where they were written.
#[derive(Debug, Clone)]
pub struct SeedRun {
    pub seed: u64,
    pub dir: PathBuf,
    pub outputs: Vec<RunOutput>,
}

/// Runs and writes every (variant × seed) of a plan. `progress` is called
/// after each seed completes.
pub fn run_plan(
    plan: &Plan,
    out_root: &Path,
    mut progress: impl FnMut(&SeedRun),
) -> Result<Vec<SeedRun>> {
    std::fs::create_dir_all(out_root).map_err(|e| Error::io(out_root, e))?;
    let mut done = Vec::new();
    for &seed in plan.seeds() {
        let outputs = run_seed(plan, seed)?;
        let dir = write_seed(plan, seed, &outputs, out_root)?;
        let run = SeedRun { seed, dir, outputs };
        progress(&run);
        done.push(run);
    }
    Ok(done)
}
