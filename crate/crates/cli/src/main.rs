use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use onlinefl_core::experiment::{self, Override, Plan, SeedRun};

/// Environment variable holding the default output directory.
const OUT_DIR_ENV: &str = "ONLINEFL_OUT_DIR";

#[derive(Parser)]
#[command(
    name = "onlinefl",
    version,
    about = "Simulated online federated learning experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every (variant × seed) of an experiment and write CSVs plus a manifest.
    Run {
        /// Experiment config (TOML). With --preset, layered over the preset.
        #[arg(long, value_name = "PATH", required_unless_present = "preset")]
        config: Option<PathBuf>,
        /// Built-in preset to start from (see `onlinefl presets`).
        #[arg(long, value_name = "NAME")]
        preset: Option<String>,
        /// Run only this seed.
        #[arg(long, value_name = "N")]
        seed: Option<u64>,
        /// Output root; defaults to the config's output_dir, then $ONLINEFL_OUT_DIR, then ./out.
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
        /// Dotted key=value assignments applied to every variant.
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        /// Suppress per-run summaries.
        #[arg(long, short)]
        quiet: bool,
    },
    /// List the built-in presets.
    Presets {
        /// Print the full config of one preset instead.
        #[arg(long, value_name = "NAME")]
        show: Option<String>,
    },
    /// Check a config without running it.
    Validate {
        #[arg(long, value_name = "PATH", required_unless_present = "preset")]
        config: Option<PathBuf>,
        #[arg(long, value_name = "NAME")]
        preset: Option<String>,
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
}

fn parse_overrides(raw: &[String], seed: Option<u64>) -> Result<Vec<Override>> {
    let mut out = raw
        .iter()
        .map(|s| s.parse::<Override>())
        .collect::<std::result::Result<Vec<_>, _>>()?;
    if let Some(seed) = seed {
        out.push(format!("seeds=[{seed}]").parse()?);
    }
    Ok(out)
}

fn load_plan(config: Option<&Path>, preset: Option<&str>, overrides: &[Override]) -> Result<Plan> {
    let plan = match (preset, config) {
        (Some(name), user) => Plan::preset(name, user, overrides)?,
        (None, Some(path)) => {
            Plan::load(path, overrides).with_context(|| format!("loading {}", path.display()))?
        }
        (None, None) => bail!("give --config or --preset"),
    };
    Ok(plan)
}

fn output_root(flag: Option<PathBuf>, plan: &Plan) -> PathBuf {
    flag.or_else(|| plan.output_dir().map(PathBuf::from))
        .or_else(|| {
            std::env::var_os(OUT_DIR_ENV)
                .filter(|v| !v.is_empty())
                .map(PathBuf::from)
        })
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn report(run: &SeedRun) {
    println!("{}", run.dir.display());
    for out in &run.outputs {
        let s = &out.summary;
        let acc = s
            .final_accuracy()
            .map_or_else(|| "-".to_string(), |a| format!("{:.4}", a));
        println!(
            "  {:<36} updates {:>6}  gradients {:>6}  rejected {:>4}  dropped {:>4}  accuracy {}",
            s.run_id,
            s.updates,
            s.gradients,
            s.rejected_small + s.rejected_similar,
            s.dropped_results,
            acc
        );
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run {
            config,
            preset,
            seed,
            out,
            overrides,
            quiet,
        } => {
            let overrides = parse_overrides(&overrides, seed)?;
            let plan = load_plan(config.as_deref(), preset.as_deref(), &overrides)?;
            let root = output_root(out, &plan);
            experiment::run_plan(&plan, &root, |r| {
                if !quiet {
                    report(r)
                }
            })?;
        }
        Command::Presets { show } => match show {
            Some(name) => match experiment::preset_text(&name) {
                Some(text) => print!("{}", text.trim_start()),
                None => bail!("unknown preset `{name}`"),
            },
            None => {
                for (name, description) in experiment::presets() {
                    println!("{name:<18} {description}");
                }
            }
        },
        Command::Validate {
            config,
            preset,
            overrides,
        } => {
            let overrides = parse_overrides(&overrides, None)?;
            let plan = load_plan(config.as_deref(), preset.as_deref(), &overrides)?;
            let names: Vec<&str> = plan.variants.iter().map(|v| v.variant.as_str()).collect();
            println!(
                "ok: preset {} with {} variant(s) [{}] and seeds {:?}",
                plan.preset,
                names.len(),
                names.join(", "),
                plan.seeds()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
