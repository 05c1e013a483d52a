//! Merging flags with an optional TOML config file.
//!
//! The file has top-level `seed` and `threads` keys and one table per
//! subcommand, keyed by the subcommand name, whose keys are the long flag
//! names with `-` replaced by `_`. A flag given on the command line wins
//! over the file; the file wins over built-in defaults.

use std::path::Path;

use anyhow::Context;
use clap::parser::ValueSource;
use clap::ArgMatches;
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

use crate::UsageError;

pub type Table = Map<String, Value>;

pub fn load(path: &Path) -> anyhow::Result<Table> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    let value: toml::Value =
        toml::from_str(&text).map_err(|e| UsageError(format!("{}: {e}", path.display())))?;
    match serde_json::to_value(value)? {
        Value::Object(map) => Ok(map),
        _ => Err(UsageError("config file must be a table".into()).into()),
    }
}

fn from_command_line(matches: &ArgMatches, key: &str) -> bool {
    matches
        .ids()
        .any(|id| id.as_str() == key && matches.value_source(key) == Some(ValueSource::CommandLine))
}

/// Overlays `file` onto `args` for every key not given on the command line.
/// Nested tables in `file` are skipped (they belong to subcommands).
pub fn merge<T: Serialize + DeserializeOwned>(
    args: T,
    matches: &ArgMatches,
    file: Option<&Table>,
) -> anyhow::Result<T> {
    let Some(file) = file else {
        return Ok(args);
    };
    let Value::Object(mut merged) = serde_json::to_value(&args)? else {
        unreachable!("argument structs serialize to objects");
    };
    for (key, value) in file {
        if value.is_object() {
            continue;
        }
        if !merged.contains_key(key) {
            return Err(UsageError(format!("unknown config key {key:?}")).into());
        }
        if !from_command_line(matches, key) {
            merged.insert(key.clone(), value.clone());
        }
    }
    serde_json::from_value(Value::Object(merged))
        .map_err(|e| UsageError(format!("config: {e}")).into())
}

/// The subcommand's table, if the file has one.
pub fn section<'a>(file: Option<&'a Table>, name: &str) -> anyhow::Result<Option<&'a Table>> {
    match file.and_then(|f| f.get(name)) {
        None => Ok(None),
        Some(Value::Object(t)) => Ok(Some(t)),
        Some(_) => Err(UsageError(format!("config key {name:?} must be a table")).into()),
    }
}
