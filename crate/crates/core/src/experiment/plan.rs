use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::error::{Error, Result};

use super::config::ExperimentConfig;
use super::presets;

/// Version string recorded in every manifest.
pub const ARTIFACT_VERSION: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));

/// A dotted `key=value` assignment applied on top of a config. The value is
/// read as a TOML value when it parses as one and as a bare string
/// otherwise, so `lr=0.1`, `policy=dynsgd` and `seeds=[1,2]` all work.
#[derive(Debug, Clone, PartialEq)]
pub struct Override {
    pub path: Vec<String>,
    pub value: Value,
}

impl FromStr for Override {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (key, raw) = s
            .split_once('=')
            .ok_or_else(|| Error::config(s, "override must look like key=value"))?;
        let key = key.trim();
        let path: Vec<String> = key.split('.').map(|p| p.trim().to_string()).collect();
        if path.iter().any(|p| p.is_empty()) {
            return Err(Error::config(key, "empty path segment in override"));
        }
        let raw = raw.trim();
        let value = match toml::from_str::<Table>(&format!("v = {raw}")) {
            Ok(mut t) => t.remove("v").expect("just parsed"),
            Err(_) => Value::String(raw.to_string()),
        };
        Ok(Override { path, value })
    }
}

impl Override {
    fn apply(&self, table: &mut Table) -> Result<()> {
        let (last, parents) = self.path.split_last().expect("non-empty");
        let mut cur = table;
        for (i, seg) in parents.iter().enumerate() {
            let entry = cur
                .entry(seg.clone())
                .or_insert_with(|| Value::Table(Table::new()));
            cur = match entry {
                Value::Table(t) => t,
                _ => {
                    return Err(Error::config(
                        self.path[..=i].join("."),
                        "cannot override inside a non-table value",
                    ))
                }
            };
        }
        cur.insert(last.clone(), self.value.clone());
        Ok(())
    }
}

/// Overlays `over` onto `base`. Nested tables merge key by key unless their
/// `kind` or `mode` tags differ, in which case the overlay replaces the
/// table wholesale; everything else is replaced.
pub fn merge(base: &mut Table, over: &Table) {
    for (k, v) in over {
        match (base.get_mut(k), v) {
            (Some(Value::Table(b)), Value::Table(o)) if !retagged(b, o) => merge(b, o),
            _ => {
                base.insert(k.clone(), v.clone());
            }
        }
    }
}

fn retagged(base: &Table, over: &Table) -> bool {
    ["kind", "mode"]
        .iter()
        .any(|tag| over.get(*tag).is_some_and(|t| base.get(*tag) != Some(t)))
}

fn deserialize_config(table: Table, label: &str) -> Result<ExperimentConfig> {
    serde_path_to_error::deserialize(Value::Table(table)).map_err(|e| {
        let path = e.path().to_string();
        let key = if path == "." { String::new() } else { path };
        let message = e.into_inner().to_string();
        let message = if label.is_empty() {
            message
        } else {
            format!("{message} (variant `{label}`)")
        };
        Error::config(key, message)
    })
}

/// Everything one `run` executes: the variants of one preset, each run for
/// every seed.
#[derive(Debug, Clone, PartialEq)]
pub struct Plan {
    pub preset: String,
    pub variants: Vec<ExperimentConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunInfo {
    artifact_version: String,
    seed: u64,
}

#[derive(Serialize)]
struct Manifest<'a> {
    run_info: RunInfo,
    variants: Vec<&'a ExperimentConfig>,
}

impl Plan {
    /// Builds a plan from a parsed config table. Top-level keys form the
    /// base; each `[[variants]]` entry is merged over it; overrides are
    /// applied last, to every variant. `base_dir` anchors relative paths.
    pub fn from_table(
        mut table: Table,
        base_dir: Option<&Path>,
        overrides: &[Override],
    ) -> Result<Plan> {
        table.remove("run_info");
        let variant_tables = match table.remove("variants") {
            None => vec![Table::new()],
            Some(Value::Array(items)) if !items.is_empty() => items
                .into_iter()
                .enumerate()
                .map(|(i, v)| match v {
                    Value::Table(t) => Ok(t),
                    _ => Err(Error::config(
                        format!("variants[{i}]"),
                        "each variant must be a table",
                    )),
                })
                .collect::<Result<Vec<_>>>()?,
            Some(_) => {
                return Err(Error::config(
                    "variants",
                    "must be a non-empty array of tables",
                ))
            }
        };
        let mut variants = Vec::with_capacity(variant_tables.len());
        for (i, vt) in variant_tables.iter().enumerate() {
            let mut merged = table.clone();
            merge(&mut merged, vt);
            for o in overrides {
                o.apply(&mut merged)?;
            }
            let label = match vt.get("variant") {
                Some(Value::String(s)) => s.clone(),
                _ if variant_tables.len() > 1 => format!("#{i}"),
                _ => String::new(),
            };
            let mut cfg = deserialize_config(merged, &label)?;
            cfg.resolve_paths(base_dir);
            cfg.validate().map_err(|e| match e {
                Error::Config { key, message } if !label.is_empty() => {
                    Error::config(key, format!("{message} (variant `{label}`)"))
                }
                other => other,
            })?;
            variants.push(cfg);
        }
        let first = &variants[0];
        for v in &variants[1..] {
            if v.preset != first.preset {
                return Err(Error::config(
                    "preset",
                    "all variants must share one preset name",
                ));
            }
            if v.seeds != first.seeds {
                return Err(Error::config(
                    "seeds",
                    "all variants must share one seed list",
                ));
            }
            if v.output_dir != first.output_dir {
                return Err(Error::config(
                    "output_dir",
                    "all variants must share one output_dir",
                ));
            }
        }
        for (i, v) in variants.iter().enumerate() {
            if variants[..i].iter().any(|u| u.variant == v.variant) {
                return Err(Error::config(
                    "variant",
                    format!("duplicate variant name `{}`", v.variant),
                ));
            }
        }
        Ok(Plan {
            preset: first.preset.clone(),
            variants,
        })
    }

    pub fn from_toml_str(
        text: &str,
        base_dir: Option<&Path>,
        overrides: &[Override],
    ) -> Result<Plan> {
        Plan::from_table(parse_table(text)?, base_dir, overrides)
    }

    /// Reads a config file; relative paths inside resolve against its
    /// directory.
    pub fn load(path: impl AsRef<Path>, overrides: &[Override]) -> Result<Plan> {
        let table = read_table(path.as_ref())?;
        Plan::from_table(table, path.as_ref().parent(), overrides)
    }

    /// A built-in preset, optionally with a user config layered on top.
    pub fn preset(name: &str, user: Option<&Path>, overrides: &[Override]) -> Result<Plan> {
        let mut table = presets::preset_table(name)
            .ok_or_else(|| Error::config("preset", format!("unknown preset `{name}`")))?;
        let base_dir = match user {
            Some(p) => {
                let user_table = read_table(p)?;
                if user_table.contains_key("variants") {
                    table.remove("variants");
                }
                merge(&mut table, &user_table);
                p.parent()
            }
            None => None,
        };
        Plan::from_table(table, base_dir, overrides)
    }

    pub fn seeds(&self) -> &[u64] {
        &self.variants[0].seeds
    }

    pub fn output_dir(&self) -> Option<&str> {
        self.variants[0].output_dir.as_deref()
    }

    /// Directory name for one seed's outputs.
    pub fn run_dir_name(&self, seed: u64) -> String {
        format!("{}_{}", self.preset, seed)
    }

    /// The fully resolved plan restricted to `seed`, as TOML. Loading it
    /// back reproduces that seed's runs exactly.
    pub fn manifest(&self, seed: u64) -> Result<String> {
        let pinned: Vec<ExperimentConfig> = self
            .variants
            .iter()
            .map(|v| ExperimentConfig {
                seeds: vec![seed],
                output_dir: None,
                ..v.clone()
            })
            .collect();
        let m = Manifest {
            run_info: RunInfo {
                artifact_version: ARTIFACT_VERSION.to_string(),
                seed,
            },
            variants: pinned.iter().collect(),
        };
        toml::to_string(&m).map_err(|e| Error::config("manifest", e.to_string()))
    }
}

fn parse_table(text: &str) -> Result<Table> {
    text.parse::<Table>()
        .map_err(|e| Error::config("", format!("invalid TOML: {}", e.message())))
}

fn read_table(path: &Path) -> Result<Table> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_table(&text).map_err(|e| match e {
        Error::Config { key, message } => {
            Error::config(key, format!("{}: {message}", path.display()))
        }
        other => other,
    })
}
