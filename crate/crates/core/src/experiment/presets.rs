//! Built-in experiments. Each preset is an ordinary config file compiled
//! into the crate; `presets` lists them and `--preset` runs one.

use toml::Table;

const STALENESS_D1: &str = r#"
preset = "staleness-d1"
description = "Aggregation policies under N(6, 2) staleness on non-IID digits"
dataset = { kind = "mnist" }
partition = "noniid"
num_users = 20
model = { hidden_dim = 64, activation = "relu" }
policy = "adasgd"
lr = 0.05
K = 1
minibatch = 100
staleness = { kind = "gaussian", mean = 6.0, std = 2.0 }
seeds = [1, 2, 3]
eval_every = 20
max_updates = 1500

[[variants]]
variant = "adasgd"

[[variants]]
variant = "dynsgd"
policy = "dynsgd"

[[variants]]
variant = "ssgd"
policy = "ssgd"

[[variants]]
variant = "fedavg"
policy = "fedavg"
"#;

const STALENESS_D2: &str = r#"
preset = "staleness-d2"
description = "Aggregation policies under N(12, 4) staleness on non-IID digits"
dataset = { kind = "mnist" }
partition = "noniid"
num_users = 20
model = { hidden_dim = 64, activation = "relu" }
policy = "adasgd"
lr = 0.05
K = 1
minibatch = 100
staleness = { kind = "gaussian", mean = 12.0, std = 4.0 }
seeds = [1, 2, 3]
eval_every = 20
max_updates = 1500

[[variants]]
variant = "adasgd"

[[variants]]
variant = "dynsgd"
policy = "dynsgd"

[[variants]]
variant = "ssgd"
policy = "ssgd"

[[variants]]
variant = "fedavg"
policy = "fedavg"
"#;

const LONGTAIL: &str = r#"
preset = "longtail"
description = "Class 0 always arrives 48 updates late; per-class recall under ADASGD vs DynSGD"
dataset = { kind = "mnist" }
partition = "noniid"
num_users = 20
model = { hidden_dim = 64, activation = "relu" }
policy = "adasgd"
lr = 0.05
K = 1
minibatch = 100
staleness = { kind = "gaussian_long_tail", mean = 6.0, std = 2.0, tail_labels = [0], tail_value = 48 }
seeds = [1, 2, 3]
eval_every = 50
max_updates = 1500

[[variants]]
variant = "adasgd"

[[variants]]
variant = "dynsgd"
policy = "dynsgd"
"#;

const WEAK_WORKERS: &str = r#"
preset = "weak-workers"
description = "Ten workers at batch 128, with and without two extra workers at batch 1"
dataset = { kind = "mnist" }
partition = "iid"
num_users = 10
model = { hidden_dim = 64, activation = "relu" }
policy = "adasgd"
lr = 0.05
K = 1
minibatch = { mode = "per_user", sizes = [128] }
staleness = { kind = "none" }
seeds = [1, 2, 3]
eval_every = 50
max_updates = 600

[[variants]]
variant = "strong"

[[variants]]
variant = "strong-and-weak"
num_users = 12
minibatch = { mode = "per_user", sizes = [128, 128, 128, 128, 128, 128, 128, 128, 128, 128, 1, 1] }
"#;

const PROFILER_SLO: &str = r#"
preset = "profiler-slo"
description = "Per-request batch bounds from the learned profiler vs the device-blind baseline under time and energy SLOs"
dataset = { kind = "synthetic", num_classes = 10, dim = 20, train_size = 20000, test_size = 2000 }
partition = "iid"
num_users = 10
fleet = "test"
model = { hidden_dim = 64, activation = "relu" }
policy = "adasgd"
lr = 0.05
minibatch = { mode = "profiler", alternate = true }
staleness = { kind = "exponential_latency", min_s = 7.1, mean_s = 8.45 }
requests_per_user = 15
arrival_rate = 0.05
seeds = [1, 2, 3]
eval_every = 25
max_updates = 100000

[[variants]]
variant = "time"
controller = { t_slo = 3.0, e_slo = 1e6 }

[[variants]]
variant = "energy"
controller = { t_slo = 1e6, e_slo = 0.075 }
"#;

const THRESHOLD_PRUNING: &str = r#"
preset = "threshold-pruning"
description = "Batch sizes ~ N(100, 33); dropping requests below the 20th-percentile size"
dataset = { kind = "mnist" }
partition = "iid"
num_users = 20
model = { hidden_dim = 64, activation = "relu" }
policy = "adasgd"
lr = 0.05
K = 1
minibatch = { mode = "gaussian", mean = 100.0, std = 33.0 }
staleness = { kind = "gaussian", mean = 6.0, std = 2.0 }
seeds = [1, 2, 3]
eval_every = 50
max_updates = 1000

[[variants]]
variant = "no-threshold"

[[variants]]
variant = "p20"
controller = { size_threshold = { mode = "percentile", p = 20.0 } }
"#;

const CADENCE: &str = r#"
preset = "cadence"
description = "Online updates vs one batched sync every 24 chunks on a drifting stream, same gradient budget"
dataset = { kind = "drifting", chunks = 240, gradients_per_chunk = 5, minibatch = 20 }
num_users = 1
model = { hidden_dim = 0, activation = "relu" }
policy = "fedavg"
lr = 0.05
K = 1
seeds = [1, 2, 3]
max_updates = 1000000

[[variants]]
variant = "online"

[[variants]]
variant = "batched"
cadence = { mode = "batched", period = 24 }
"#;

const DP_NOISE: &str = r#"
preset = "dp-noise"
description = "Clip-and-noise gradient perturbation under N(6, 2) staleness"
dataset = { kind = "mnist" }
partition = "noniid"
num_users = 20
model = { hidden_dim = 64, activation = "relu" }
policy = "adasgd"
lr = 0.05
K = 1
minibatch = 100
staleness = { kind = "gaussian", mean = 6.0, std = 2.0 }
seeds = [1, 2, 3]
eval_every = 50
max_updates = 1000

[[variants]]
variant = "adasgd-clean"

[[variants]]
variant = "adasgd-noisy"
perturb = { clip_norm = 5.0, sigma = 0.002 }

[[variants]]
variant = "dynsgd-noisy"
policy = "dynsgd"
perturb = { clip_norm = 5.0, sigma = 0.002 }
"#;

const PRESETS: [(&str, &str); 8] = [
    ("staleness-d1", STALENESS_D1),
    ("staleness-d2", STALENESS_D2),
    ("longtail", LONGTAIL),
    ("weak-workers", WEAK_WORKERS),
    ("profiler-slo", PROFILER_SLO),
    ("threshold-pruning", THRESHOLD_PRUNING),
    ("cadence", CADENCE),
    ("dp-noise", DP_NOISE),
];

/// `(name, one-line description)` for every built-in preset.
pub fn presets() -> Vec<(&'static str, String)> {
    PRESETS
        .iter()
        .map(|(name, text)| {
            let table = text.parse::<Table>().expect("presets are valid TOML");
            let description = table
                .get("description")
                .and_then(|d| d.as_str())
                .unwrap_or_default()
                .to_string();
            (*name, description)
        })
        .collect()
}

/// The raw config text of a preset.
pub fn preset_text(name: &str) -> Option<&'static str> {
    PRESETS.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}

pub fn preset_table(name: &str) -> Option<Table> {
    preset_text(name).map(|t| t.parse().expect("presets are valid TOML"))
}
