//! Self-describing run reports: a reproducibility header (tool version,
//! command, seed, thread count, every setting) followed by `metric,value`
//! rows.

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use serde_json::{json, Map, Value};

#[derive(Debug, Clone, PartialEq)]
pub enum Metric {
    Int(i64),
    Real(f64),
    Text(String),
}

impl Metric {
    fn render(&self) -> String {
        match self {
            Metric::Int(v) => v.to_string(),
            Metric::Real(v) => format!("{v}"),
            Metric::Text(v) => v.clone(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Metric::Int(v) => json!(v),
            Metric::Real(v) => json!(v),
            Metric::Text(v) => json!(v),
        }
    }
}

impl From<f64> for Metric {
    fn from(v: f64) -> Self {
        Metric::Real(v)
    }
}

impl From<usize> for Metric {
    fn from(v: usize) -> Self {
        Metric::Int(v as i64)
    }
}

impl From<&str> for Metric {
    fn from(v: &str) -> Self {
        Metric::Text(v.to_string())
    }
}

impl From<String> for Metric {
    fn from(v: String) -> Self {
        Metric::Text(v)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub command: String,
    pub config: Vec<(String, String)>,
    pub metrics: Vec<(String, Metric)>,
}

impl Report {
    pub fn new(command: &str) -> Self {
        Report {
            command: command.to_string(),
            config: Vec::new(),
            metrics: Vec::new(),
        }
    }

    pub fn setting(&mut self, key: &str, value: impl ToString) -> &mut Self {
        self.config.push((key.to_string(), value.to_string()));
        self
    }

    pub fn metric(&mut self, key: &str, value: impl Into<Metric>) -> &mut Self {
        self.metrics.push((key.to_string(), value.into()));
        self
    }

    pub fn get(&self, key: &str) -> Option<&Metric> {
        self.metrics.iter().find(|(k, _)| k == key).map(|(_, v)| v)
    }

    /// Version line and config echo, each prefixed with `#`.
    pub fn header(&self) -> String {
        let mut out = format!("# bindesc {} {}\n", env!("CARGO_PKG_VERSION"), self.command);
        for (k, v) in &self.config {
            out.push_str(&format!("# {k}={v}\n"));
        }
        out
    }

    /// [`Report::header`] followed by `metric,value` CSV.
    pub fn to_csv(&self) -> String {
        let mut out = self.header();
        out.push_str("metric,value\n");
        for (k, v) in &self.metrics {
            out.push_str(&format!("{k},{}\n", v.render()));
        }
        out
    }

    pub fn to_json(&self) -> Value {
        let config: Map<String, Value> = self
            .config
            .iter()
            .map(|(k, v)| (k.clone(), json!(v)))
            .collect();
        let metrics: Map<String, Value> = self
            .metrics
            .iter()
            .map(|(k, v)| (k.clone(), v.json()))
            .collect();
        json!({
            "tool": "bindesc",
            "version": env!("CARGO_PKG_VERSION"),
            "command": self.command,
            "config": config,
            "metrics": metrics,
        })
    }

    pub fn write(&self, csv: Option<&Path>, json: Option<&Path>) -> Result<()> {
        if let Some(p) = csv {
            fs::write(p, self.to_csv())
                .with_context(|| format!("writing report {}", p.display()))?;
        }
        if let Some(p) = json {
            let text = serde_json::to_string_pretty(&self.to_json())?;
            fs::write(p, text + "\n").with_context(|| format!("writing report {}", p.display()))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_and_json_carry_header_and_metrics() {
        let mut r = Report::new("eval verification");
        r.setting("seed", 7)
            .metric("fpr95", 0.25)
            .metric("pairs", 10usize);
        let csv = r.to_csv();
        assert!(csv.starts_with("# bindesc "));
        assert!(csv.contains("# seed=7\n"));
        assert!(csv.ends_with("metric,value\nfpr95,0.25\npairs,10\n"));
        let j = r.to_json();
        assert_eq!(j["config"]["seed"], "7");
        assert_eq!(j["metrics"]["fpr95"], 0.25);
    }
}
