//! Experiment configuration with layered overrides.
//!
//! Values resolve in increasing priority: the named preset, then the TOML
//! file given with `--config`, then `--set key=value` pairs, then `--seed`.
//!
//! ```toml
//! preset = "E4"
//! seed = 3
//!
//! [train]
//! ce_steps = 800
//!
//! [model]
//! attention_heads = 2
//! ```

use std::fs;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use super::experiment::{preset, Preset, ToyConfig, Units};
use crate::decoding::BeamConfig;
use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::training::TrainConfig;

pub const DEFAULT_PRESET: &str = "E8";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub preset: String,
    pub seed: u64,
    pub units: Units,
    pub use_lm: bool,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub beam: BeamConfig,
    pub toy: ToyConfig,
}

impl ExperimentConfig {
    pub fn from_preset(p: &Preset) -> Self {
        ExperimentConfig {
            preset: p.name.clone(),
            seed: p.train.seed,
            units: p.units,
            use_lm: p.use_lm,
            model: p.model.clone(),
            train: p.train.clone(),
            beam: BeamConfig::default(),
            toy: ToyConfig::default(),
        }
    }

    /// The preset view of this configuration, with the top-level seed applied.
    pub fn as_preset(&self) -> Result<Preset> {
        let base = preset(&self.preset)?;
        Ok(Preset {
            units: self.units,
            use_lm: self.use_lm,
            model: self.model.clone(),
            train: TrainConfig { seed: self.seed, ..self.train.clone() },
            ..base
        })
    }

    pub fn validate(&self) -> Result<()> {
        preset(&self.preset)?;
        self.train.validate()?;
        self.beam.validate()?;
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }
}

/// Everything on the command line that shapes the configuration.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Overrides {
    pub preset: Option<String>,
    pub config: Option<PathBuf>,
    pub sets: Vec<String>,
    pub seed: Option<u64>,
}

fn merge(base: &mut Table, top: Table) {
    for (k, v) in top {
        match (base.get_mut(&k), v) {
            (Some(Value::Table(b)), Value::Table(t)) => merge(b, t),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

fn parse_assignment(s: &str) -> Result<(Vec<String>, Value)> {
    let (key, raw) = s
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("--set expects key=value, got {s:?}")))?;
    let path: Vec<String> = key.trim().split('.').map(|p| p.trim().to_string()).collect();
    if path.iter().any(String::is_empty) {
        return Err(Error::Config(format!("--set has an empty key segment in {key:?}")));
    }
    let raw = raw.trim();
    let value = toml::from_str::<Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()));
    Ok((path, value))
}

fn assign(table: &mut Table, path: &[String], value: Value) -> Result<()> {
    let (last, parents) = path.split_last().expect("non-empty key path");
    let mut cur = table;
    for p in parents {
        cur = match cur.entry(p.clone()).or_insert_with(|| Value::Table(Table::new())) {
            Value::Table(t) => t,
            _ => return Err(Error::Config(format!("--set: {p:?} is not a section"))),
        };
    }
    cur.insert(last.clone(), value);
    Ok(())
}

/// Resolve the final configuration from preset, file and flag overrides.
pub fn resolve(o: &Overrides) -> Result<ExperimentConfig> {
    let file: Table = match &o.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
        }
        None => Table::new(),
    };
    let name = match (&o.preset, file.get("preset")) {
        (Some(p), _) => p.clone(),
        (None, Some(Value::String(p))) => p.clone(),
        (None, Some(other)) => return Err(Error::Config(format!("preset must be a string, got {other}"))),
        (None, None) => DEFAULT_PRESET.to_string(),
    };
    let base = ExperimentConfig::from_preset(&preset(&name)?);
    let mut table = match Value::try_from(&base).map_err(|e| Error::Config(e.to_string()))? {
        Value::Table(t) => t,
        _ => unreachable!("a struct serializes to a table"),
    };
    merge(&mut table, file);
    for s in &o.sets {
        let (path, value) = parse_assignment(s)?;
        assign(&mut table, &path, value)?;
    }
    if let Some(seed) = o.seed {
        let seed = i64::try_from(seed).map_err(|_| Error::Config("--seed must fit in a signed 64-bit integer".into()))?;
        table.insert("seed".into(), Value::Integer(seed));
    }
    table.insert("preset".into(), Value::String(base.preset.clone()));
    let cfg: ExperimentConfig = Value::Table(table).try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}
