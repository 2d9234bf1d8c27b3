//! Flat `key = value` run configuration.
//!
//! One key per line; `#` starts a comment. Keys are the `TrainConfig` field
//! names plus `input`, `test_input` and `out`. Lists are comma separated
//! (`modes = 1,5`), per-segment direction lists separate segments with `;`
//! (`initial_directions = 1,1;0.5,1`) and `none` clears an optional value.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use emph::learner::TrainConfig;
use serde_json::Value;

const LIST_KEYS: &[&str] = &["modes", "hidden"];
const NESTED_KEYS: &[&str] = &["initial_directions"];
const PATH_KEYS: &[&str] = &["input", "test_input", "out"];

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub input: Option<PathBuf>,
    pub test_input: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn numbers(text: &str, line: usize) -> Result<Vec<Value>, ConfigError> {
    let prefix = if line > 0 { format!("line {line}: ") } else { String::new() };
    text.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| {
            serde_json::from_str::<Value>(t)
                .ok()
                .filter(Value::is_number)
                .ok_or_else(|| ConfigError(format!("{prefix}{t:?} is not a number")))
        })
        .collect()
}

fn parse_value(key: &str, text: &str, line: usize) -> Result<Value, ConfigError> {
    if text == "none" {
        return Ok(Value::Null);
    }
    if LIST_KEYS.contains(&key) {
        return Ok(Value::Array(numbers(text, line)?));
    }
    if NESTED_KEYS.contains(&key) {
        let rows = text
            .split(';')
            .map(|row| numbers(row, line).map(Value::Array))
            .collect::<Result<Vec<_>, _>>()?;
        return Ok(Value::Array(rows));
    }
    Ok(match serde_json::from_str::<Value>(text) {
        Ok(v @ (Value::Number(_) | Value::Bool(_))) => v,
        _ => Value::String(text.to_string()),
    })
}

fn format_value(value: &Value) -> String {
    match value {
        Value::Null => "none".into(),
        Value::String(s) => s.clone(),
        Value::Array(items) if items.iter().all(Value::is_array) && !items.is_empty() => items
            .iter()
            .map(format_value)
            .collect::<Vec<_>>()
            .join(";"),
        Value::Array(items) => items.iter().map(format_value).collect::<Vec<_>>().join(","),
        other => other.to_string(),
    }
}

impl RunConfig {
    /// Sets one key from its text form, as it would appear in a file.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        self.set_at(key, value.trim(), 0)
    }

    fn set_at(&mut self, key: &str, value: &str, line: usize) -> Result<(), ConfigError> {
        let at = |msg: String| {
            if line > 0 {
                ConfigError(format!("line {line}: {msg}"))
            } else {
                ConfigError(msg)
            }
        };
        if PATH_KEYS.contains(&key) {
            let path = (value != "none").then(|| PathBuf::from(value));
            match key {
                "input" => self.input = path,
                "test_input" => self.test_input = path,
                _ => self.out = path,
            }
            return Ok(());
        }
        let mut fields = match serde_json::to_value(&self.train) {
            Ok(Value::Object(map)) => map,
            _ => unreachable!("TrainConfig serializes to an object"),
        };
        if !fields.contains_key(key) {
            return Err(at(format!("unknown key {key:?}")));
        }
        fields.insert(key.to_string(), parse_value(key, value, line)?);
        self.train = serde_json::from_value(Value::Object(fields))
            .map_err(|e| at(format!("invalid value {value:?} for {key}: {e}")))?;
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut run = RunConfig::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| ConfigError(format!("line {line}: expected key = value")))?;
            run.set_at(key.trim(), value.trim(), line)?;
        }
        Ok(run)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (key, path) in [
            ("input", &self.input),
            ("test_input", &self.test_input),
            ("out", &self.out),
        ] {
            if let Some(p) = path {
                let _ = writeln!(out, "{key} = {}", p.display());
            }
        }
        let value = serde_json::to_value(&self.train).expect("TrainConfig serializes");
        for (key, v) in value.as_object().expect("object") {
            let _ = writeln!(out, "{key} = {}", format_value(v));
        }
        out
    }
}
