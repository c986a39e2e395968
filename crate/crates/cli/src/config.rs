//! Config files, flag merging and `run.json` fingerprints.
//!
//! A config file is TOML (or a `run.json` written by a previous run). Keys
//! use the long flag names with `_` or `-`. A TOML file may hold one table
//! per subcommand; top-level keys apply to every subcommand. Flags given on
//! the command line win over the file.

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use boltwave::dataset::{fingerprint, write_json};

use crate::UsageError;

pub const TOOL: &str = "boltwave";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub const SEED_ENV: &str = "AE_PIPELINE_SEED";

/// Written next to every output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: Option<u64>,
    pub config: Map<String, Value>,
    pub fingerprint: String,
}

impl RunRecord {
    pub fn new(command: &str, seed: Option<u64>, config: Map<String, Value>) -> Self {
        let fingerprint = fingerprint(&(TOOL, VERSION, command, seed, &config));
        Self {
            tool: TOOL.into(),
            version: VERSION.into(),
            command: command.into(),
            seed,
            config,
            fingerprint,
        }
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        write_json(path, self)?;
        Ok(())
    }
}

fn normalize(map: Map<String, Value>) -> Map<String, Value> {
    map.into_iter().map(|(k, v)| (k.replace('-', "_"), v)).collect()
}

/// Keys that apply to `command`, from a TOML config or a `run.json`.
pub fn load(path: &Path, command: &str) -> Result<Map<String, Value>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    let is_json = path.extension().is_some_and(|e| e == "json");
    if is_json {
        let record: RunRecord = serde_json::from_str(&text)
            .map_err(|e| UsageError(format!("{} is not a run.json: {e}", path.display())))?;
        if record.command != command {
            return Err(UsageError(format!(
                "{} was written by `{}`, not `{command}`",
                path.display(),
                record.command
            ))
            .into());
        }
        let mut map = record.config;
        if let Some(seed) = record.seed {
            map.insert("seed".into(), seed.into());
        }
        return Ok(normalize(map));
    }
    let value: toml::Value =
        toml::from_str(&text).map_err(|e| UsageError(format!("{}: {e}", path.display())))?;
    let Value::Object(root) = serde_json::to_value(value)? else {
        unreachable!("a TOML document is a table");
    };
    let mut out = Map::new();
    let mut section = None;
    for (k, v) in normalize(root) {
        match v {
            Value::Object(table) if k == command => section = Some(table),
            Value::Object(_) => {}
            other => {
                out.insert(k, other);
            }
        }
    }
    if let Some(table) = section {
        out.extend(normalize(table));
    }
    Ok(out)
}

fn is_absent(v: &Value) -> bool {
    match v {
        Value::Null | Value::Bool(false) => true,
        Value::Array(a) => a.is_empty(),
        _ => false,
    }
}

/// Overlays the flags on the config file and returns the merged arguments
/// plus the non-default keys for `run.json`.
pub fn merge<T: Serialize + DeserializeOwned + Default>(
    flags: &T,
    mut file: Map<String, Value>,
) -> Result<(T, Map<String, Value>)> {
    let Value::Object(known) = serde_json::to_value(T::default())? else {
        unreachable!("argument structs serialize to objects");
    };
    file.remove("seed");
    if let Some(bad) = file.keys().find(|k| !known.contains_key(*k)) {
        return Err(UsageError(format!("unknown config key `{bad}`")).into());
    }
    let Value::Object(given) = serde_json::to_value(flags)? else {
        unreachable!("argument structs serialize to objects");
    };
    for (k, v) in given {
        if !is_absent(&v) {
            file.insert(k, v);
        }
    }
    file.retain(|_, v| !is_absent(v));
    let merged: T = serde_json::from_value(Value::Object(file.clone()))
        .map_err(|e| UsageError(format!("invalid config value: {e}")))?;
    Ok((merged, file))
}

/// Flag, then config file, then `AE_PIPELINE_SEED`.
pub fn resolve_seed(flag: Option<u64>, file: &Map<String, Value>) -> Result<Option<u64>> {
    if flag.is_some() {
        return Ok(flag);
    }
    if let Some(v) = file.get("seed") {
        return v
            .as_u64()
            .map(Some)
            .ok_or_else(|| UsageError(format!("seed must be a non-negative integer, got {v}")).into());
    }
    match std::env::var(SEED_ENV) {
        Ok(s) => s
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| UsageError(format!("{SEED_ENV}=`{s}` is not a non-negative integer")).into()),
        Err(_) => Ok(None),
    }
}

/// `0..9` (inclusive), `0..=9`, `1,3,5` or a mix.
pub fn parse_list(s: &str) -> Result<Vec<usize>, String> {
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        if let Some((a, b)) = part.split_once("..") {
            let b = b.strip_prefix('=').unwrap_or(b);
            let lo: usize = a.trim().parse().map_err(|_| format!("bad range start in `{part}`"))?;
            let hi: usize = b.trim().parse().map_err(|_| format!("bad range end in `{part}`"))?;
            if lo > hi {
                return Err(format!("empty range `{part}`"));
            }
            out.extend(lo..=hi);
        } else {
            out.push(part.parse().map_err(|_| format!("`{part}` is not a whole number"))?);
        }
    }
    if out.is_empty() {
        return Err("empty list".into());
    }
    Ok(out)
}
