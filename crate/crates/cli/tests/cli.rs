use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn onlinefl(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_onlinefl"))
        .args(args)
        .current_dir(cwd)
        .env_remove("ONLINEFL_OUT_DIR")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const SHORT: [&str; 4] = [
    "--override",
    "max_updates=40",
    "--override",
    "eval_every=20",
];

#[test]
fn presets_lists_named_experiments() {
    let tmp = tempfile::tempdir().unwrap();
    let o = onlinefl(&["presets"], tmp.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    for name in [
        "staleness-d1",
        "staleness-d2",
        "longtail",
        "profiler-slo",
        "cadence",
    ] {
        assert!(
            text.lines().any(|l| l.starts_with(name)),
            "{name} missing:\n{text}"
        );
    }
    let shown = onlinefl(&["presets", "--show", "cadence"], tmp.path());
    assert!(stdout(&shown).contains("period = 24"));
}

#[test]
fn run_preset_writes_reproducible_csvs() {
    let tmp = tempfile::tempdir().unwrap();
    let mut args = vec![
        "run",
        "--preset",
        "staleness-d1",
        "--seed",
        "1",
        "--out",
        "a",
        "-q",
    ];
    args.extend(SHORT);
    let o = onlinefl(&args, tmp.path());
    assert!(o.status.success(), "{}", stderr(&o));

    let dir = tmp.path().join("a/staleness-d1_1");
    let metrics = fs::read_to_string(dir.join("metrics.csv")).unwrap();
    let header = metrics.lines().next().unwrap();
    assert!(
        header.starts_with("run_id,seed,event,update_index"),
        "{header}"
    );
    for variant in ["adasgd", "dynsgd", "ssgd", "fedavg"] {
        assert!(
            metrics.contains(&format!("staleness-d1/{variant}/1")),
            "{variant}"
        );
    }
    assert!(dir.join("profiler.csv").exists());
    assert!(!tmp.path().join("a/staleness-d1_2").exists());

    args[6] = "b";
    let again = onlinefl(&args, tmp.path());
    assert!(again.status.success());
    for f in ["metrics.csv", "profiler.csv", "manifest.toml"] {
        assert_eq!(
            fs::read(dir.join(f)).unwrap(),
            fs::read(tmp.path().join("b/staleness-d1_1").join(f)).unwrap(),
            "{f}"
        );
    }

    // The manifest alone reproduces the run.
    let replay = onlinefl(
        &[
            "run",
            "--config",
            "a/staleness-d1_1/manifest.toml",
            "--out",
            "c",
            "-q",
        ],
        tmp.path(),
    );
    assert!(replay.status.success(), "{}", stderr(&replay));
    assert_eq!(
        fs::read(dir.join("metrics.csv")).unwrap(),
        fs::read(tmp.path().join("c/staleness-d1_1/metrics.csv")).unwrap()
    );
}

#[test]
fn unknown_key_fails_with_its_name() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("bad.toml"), "polcy = \"adasgd\"\n").unwrap();
    let o = onlinefl(&["run", "--config", "bad.toml"], tmp.path());
    assert!(!o.status.success());
    assert!(stderr(&o).contains("polcy"), "{}", stderr(&o));

    let v = onlinefl(&["validate", "--config", "bad.toml"], tmp.path());
    assert!(!v.status.success());
    assert!(stderr(&v).contains("polcy"));
}

#[test]
fn bad_value_fails_validation() {
    let tmp = tempfile::tempdir().unwrap();
    let o = onlinefl(
        &[
            "validate",
            "--preset",
            "staleness-d2",
            "--override",
            "s_percent=120",
        ],
        tmp.path(),
    );
    assert!(!o.status.success());
    assert!(stderr(&o).contains("s_percent"), "{}", stderr(&o));
    let ok = onlinefl(&["validate", "--preset", "staleness-d2"], tmp.path());
    assert!(ok.status.success());
    assert!(stdout(&ok).contains("4 variant(s)"));
}

#[test]
fn output_dir_defaults_to_env() {
    let tmp = tempfile::tempdir().unwrap();
    let mut args = vec!["run", "--preset", "longtail", "--seed", "2", "-q"];
    args.extend(SHORT);
    let o = Command::new(env!("CARGO_BIN_EXE_onlinefl"))
        .args(&args)
        .current_dir(tmp.path())
        .env("ONLINEFL_OUT_DIR", tmp.path().join("from-env"))
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(tmp.path().join("from-env/longtail_2/metrics.csv").exists());
    assert!(!tmp.path().join("out").exists());
}
