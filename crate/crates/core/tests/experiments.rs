use std::fs;

use onlinefl_core::experiment::{
    execute, load_dataset, DatasetConfig, Driver, IdxFiles, Override, Plan,
};
use onlinefl_core::sim::bundled_digits;
use onlinefl_core::Error;

const CUSTOM: &str = r#"
preset = "custom-check"
dataset = { kind = "synthetic", num_classes = 4, dim = 6, train_size = 800, test_size = 200, separation = 2.0 }
num_users = 8
fleet = { path = "fleet.toml" }
model = { hidden_dim = 8, activation = "tanh" }
policy = "adasgd"
lr = 0.1
minibatch = { mode = "profiler", alternate = true }
staleness = { kind = "exponential_latency", min_s = 1.0, mean_s = 2.0 }
requests_per_user = 4
seeds = [3]
"#;

const FLEET: &str = r#"
[[device]]
device_model = "slow"
true_alpha_time = 0.05
true_alpha_energy = 0.001
feature_base = { avail_mem = 900.0, total_mem = 2048.0, temperature = 28.0, cpu_freq_sum = 6000.0, energy_per_cpu_time = 0.02 }

[[device]]
device_model = "fast"
true_alpha_time = 0.01
true_alpha_energy = 0.0002
feature_base = { avail_mem = 3000.0, total_mem = 4096.0, temperature = 26.0, cpu_freq_sum = 16000.0, energy_per_cpu_time = 0.02 }
"#;

#[test]
fn config_files_resolve_relative_paths_and_run() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("exp.toml"), CUSTOM).unwrap();
    fs::write(dir.path().join("fleet.toml"), FLEET).unwrap();
    let plan = Plan::load(dir.path().join("exp.toml"), &[]).unwrap();
    let cfg = &plan.variants[0];
    assert_eq!(cfg.driver(), Driver::Timed);
    let out = execute(cfg, 3).unwrap();
    assert_eq!(out.profiler.len(), 32);
    let models: std::collections::BTreeSet<&str> = out
        .profiler
        .iter()
        .map(|r| r.device_model.as_str())
        .collect();
    assert_eq!(models.into_iter().collect::<Vec<_>>(), vec!["fast", "slow"]);
    assert_eq!(
        out.summary.global_label_counts,
        out.summary.consumed_label_sum
    );

    // The manifest pins the absolute fleet path, so it replays from anywhere.
    let manifest = plan.manifest(3).unwrap();
    let elsewhere = tempfile::tempdir().unwrap();
    fs::write(elsewhere.path().join("m.toml"), &manifest).unwrap();
    let replay = Plan::load(elsewhere.path().join("m.toml"), &[]).unwrap();
    assert_eq!(execute(&replay.variants[0], 3).unwrap(), out);
}

#[test]
fn missing_fleet_file_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("exp.toml"), CUSTOM).unwrap();
    let plan = Plan::load(dir.path().join("exp.toml"), &[]).unwrap();
    assert!(matches!(
        execute(&plan.variants[0], 3),
        Err(Error::Io { .. })
    ));
}

#[test]
fn explicit_idx_files_match_the_bundled_sample() {
    let data = concat!(env!("CARGO_MANIFEST_DIR"), "/data");
    let cfg = DatasetConfig::Mnist {
        dir: None,
        files: Some(IdxFiles {
            train_images: format!("{data}/sample-train-images-idx3-ubyte.gz"),
            train_labels: format!("{data}/sample-train-labels-idx1-ubyte.gz"),
            test_images: format!("{data}/sample-test-images-idx3-ubyte.gz"),
            test_labels: format!("{data}/sample-test-labels-idx1-ubyte.gz"),
        }),
        train_limit: 10_000,
        test_limit: 2_000,
    };
    let (train, test) = load_dataset(&cfg).unwrap();
    let (btrain, btest) = bundled_digits().unwrap();
    assert_eq!((train, test), (btrain, btest));
}

#[test]
fn seeds_change_results_but_reruns_do_not() {
    let plan = Plan::preset(
        "staleness-d1",
        None,
        &[
            "max_updates=15".parse::<Override>().unwrap(),
            "eval_every=5".parse().unwrap(),
        ],
    )
    .unwrap();
    let cfg = &plan.variants[0];
    let a = execute(cfg, 1).unwrap();
    assert_eq!(a, execute(cfg, 1).unwrap());
    assert_ne!(a.metrics, execute(cfg, 2).unwrap().metrics);
}

#[test]
fn user_config_layers_over_a_preset() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("tweak.toml");
    fs::write(&path, "lr = 0.01\nseeds = [7]\n").unwrap();
    let plan = Plan::preset("longtail", Some(&path), &[]).unwrap();
    assert_eq!(plan.seeds(), &[7]);
    assert!(plan.variants.iter().all(|v| v.lr == 0.01));
    assert_eq!(plan.variants.len(), 2);
}

#[test]
fn invalid_values_name_their_key() {
    let err = Plan::preset("cadence", None, &["cadence.period=0".parse().unwrap()]).unwrap_err();
    match err {
        Error::Config { key, .. } => assert!(key.starts_with("cadence"), "{key}"),
        other => panic!("{other:?}"),
    }
    let err = Plan::preset("staleness-d1", None, &["K=0".parse().unwrap()]).unwrap_err();
    assert!(err.to_string().contains("`K`"), "{err}");
}
