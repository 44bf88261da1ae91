//! JSON reports: `{config, ledger, results, checks}` with every float
//! printed at 17 significant digits and keys in a fixed (sorted) order, so
//! identical runs give identical bytes.

use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;
use serde_json::Value;

use crate::error::{Error, Result};
use crate::grid::fmt17;

/// One named inequality `lhs ≤ rhs` (or `≥`), with `slack` signed so that
/// non-negative means satisfied.
#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub lhs: Option<f64>,
    pub rhs: Option<f64>,
    pub slack: Option<f64>,
}

impl Check {
    pub fn le(name: impl Into<String>, lhs: f64, rhs: f64) -> Self {
        Self { name: name.into(), pass: lhs <= rhs, lhs: Some(lhs), rhs: Some(rhs), slack: Some(rhs - lhs) }
    }

    pub fn ge(name: impl Into<String>, lhs: f64, rhs: f64) -> Self {
        Self { name: name.into(), pass: lhs >= rhs, lhs: Some(lhs), rhs: Some(rhs), slack: Some(lhs - rhs) }
    }

    /// Strict `lhs < rhs`.
    pub fn lt(name: impl Into<String>, lhs: f64, rhs: f64) -> Self {
        Self { pass: lhs < rhs, ..Self::le(name, lhs, rhs) }
    }

    /// A yes/no check without numbers.
    pub fn flag(name: impl Into<String>, pass: bool) -> Self {
        Self { name: name.into(), pass, lhs: None, rhs: None, slack: None }
    }
}

#[derive(Debug, Clone)]
pub struct Report {
    pub config: Value,
    pub ledger: Value,
    pub results: Value,
    pub checks: Vec<Check>,
}

impl Report {
    pub fn new(config: &impl Serialize) -> Result<Self> {
        Ok(Self { config: serde_json::to_value(config)?, ledger: Value::Null, results: Value::Null, checks: Vec::new() })
    }

    pub fn with_ledger(mut self, ledger: &impl Serialize) -> Result<Self> {
        self.ledger = serde_json::to_value(ledger)?;
        Ok(self)
    }

    pub fn with_results(mut self, results: &impl Serialize) -> Result<Self> {
        self.results = serde_json::to_value(results)?;
        Ok(self)
    }

    pub fn push(&mut self, check: Check) {
        self.checks.push(check);
    }

    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn to_json(&self) -> Result<String> {
        let mut top = serde_json::Map::new();
        top.insert("config".into(), self.config.clone());
        top.insert("ledger".into(), self.ledger.clone());
        top.insert("results".into(), self.results.clone());
        top.insert("checks".into(), serde_json::to_value(&self.checks)?);
        let mut out = String::new();
        // fixed top-level order rather than the map's sorted order
        out.push_str("{\n");
        for (i, key) in ["config", "ledger", "results", "checks"].into_iter().enumerate() {
            let _ = write!(out, "  \"{key}\": ");
            emit(&top[key], 1, &mut out);
            out.push_str(if i < 3 { ",\n" } else { "\n" });
        }
        out.push_str("}\n");
        Ok(out)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|source| Error::Io { path: path.to_path_buf(), source })
    }
}

fn indent(level: usize, out: &mut String) {
    for _ in 0..level {
        out.push_str("  ");
    }
}

fn emit(v: &Value, level: usize, out: &mut String) {
    match v {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                let _ = write!(out, "{i}");
            } else if let Some(u) = n.as_u64() {
                let _ = write!(out, "{u}");
            } else {
                out.push_str(&fmt17(n.as_f64().expect("finite float")));
            }
        }
        Value::String(s) => out.push_str(&Value::String(s.clone()).to_string()),
        Value::Array(items) => {
            if items.is_empty() {
                out.push_str("[]");
                return;
            }
            if items.iter().all(|x| !x.is_array() && !x.is_object()) {
                out.push('[');
                for (i, x) in items.iter().enumerate() {
                    if i > 0 {
                        out.push_str(", ");
                    }
                    emit(x, level, out);
                }
                out.push(']');
                return;
            }
            out.push_str("[\n");
            for (i, x) in items.iter().enumerate() {
                indent(level + 1, out);
                emit(x, level + 1, out);
                out.push_str(if i + 1 < items.len() { ",\n" } else { "\n" });
            }
            indent(level, out);
            out.push(']');
        }
        Value::Object(map) => {
            if map.is_empty() {
                out.push_str("{}");
                return;
            }
            out.push_str("{\n");
            for (i, (k, x)) in map.iter().enumerate() {
                indent(level + 1, out);
                let _ = write!(out, "{}: ", Value::String(k.clone()));
                emit(x, level + 1, out);
                out.push_str(if i + 1 < map.len() { ",\n" } else { "\n" });
            }
            indent(level, out);
            out.push('}');
        }
    }
}
