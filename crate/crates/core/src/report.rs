//! Run reports: line-delimited JSON plus a plain-text summary.
//!
//! The first line describes the run (command, seed, merged config); then
//! come `metric`, `row` and `artifact` lines. Reports carry no timestamps or
//! durations, so identical runs produce identical files.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;
use serde_json::{json, Value};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub command: String,
    pub seed: u64,
    pub config: Value,
    pub metrics: BTreeMap<String, Value>,
    pub tables: Vec<(String, Vec<Value>)>,
    pub artifacts: Vec<String>,
}

fn to_value(v: impl Serialize) -> Result<Value> {
    serde_json::to_value(v).map_err(|e| Error::Format(e.to_string()))
}

impl RunReport {
    pub fn new(command: &str, seed: u64, config: impl Serialize) -> Result<Self> {
        Ok(Self {
            command: command.to_string(),
            seed,
            config: to_value(config)?,
            metrics: BTreeMap::new(),
            tables: Vec::new(),
            artifacts: Vec::new(),
        })
    }

    pub fn metric(&mut self, name: &str, value: impl Serialize) -> Result<()> {
        self.metrics.insert(name.to_string(), to_value(value)?);
        Ok(())
    }

    pub fn table<T: Serialize>(
        &mut self,
        name: &str,
        rows: impl IntoIterator<Item = T>,
    ) -> Result<()> {
        let rows = rows.into_iter().map(to_value).collect::<Result<Vec<_>>>()?;
        self.tables.push((name.to_string(), rows));
        Ok(())
    }

    pub fn artifact(&mut self, path: impl AsRef<Path>) {
        self.artifacts.push(path.as_ref().display().to_string());
    }

    pub fn to_jsonl(&self) -> String {
        let mut lines = vec![json!({
            "type": "run",
            "command": self.command,
            "seed": self.seed,
            "config": self.config,
        })];
        for (name, value) in &self.metrics {
            lines.push(json!({"type": "metric", "name": name, "value": value}));
        }
        for (table, rows) in &self.tables {
            for row in rows {
                lines.push(json!({"type": "row", "table": table, "row": row}));
            }
        }
        for path in &self.artifacts {
            lines.push(json!({"type": "artifact", "path": path}));
        }
        lines.iter().map(|l| format!("{l}\n")).collect()
    }

    pub fn summary(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{} (seed {})", self.command, self.seed);
        for (name, value) in &self.metrics {
            let _ = writeln!(out, "  {name}: {value}");
        }
        for (table, rows) in &self.tables {
            let _ = writeln!(out, "  {table}: {} rows", rows.len());
        }
        for path in &self.artifacts {
            let _ = writeln!(out, "  wrote {path}");
        }
        out
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_jsonl())?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jsonl_is_ordered_and_parseable() {
        let mut r = RunReport::new("train", 7, json!({"ridge": 0.001})).unwrap();
        r.metric("z", 1.5).unwrap();
        r.metric("a", 2).unwrap();
        r.table("rows", [json!({"x": 1}), json!({"x": 2})]).unwrap();
        r.artifact("model.bin");
        let text = r.to_jsonl();
        let lines: Vec<Value> = text
            .lines()
            .map(|l| serde_json::from_str(l).unwrap())
            .collect();
        assert_eq!(lines.len(), 6);
        assert_eq!(lines[0]["command"], "train");
        assert_eq!(lines[1]["name"], "a");
        assert_eq!(lines[4]["row"]["x"], 2);
        assert_eq!(text, r.clone().to_jsonl());
    }
}
