//! Run reports and the cross-run summary table.

use crate::config::ExperimentConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::io::Write;
use std::path::Path;
use thiserror::Error;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Comparison {
    /// value ≤ threshold
    AtMost,
    /// value ≥ threshold
    AtLeast,
    /// |value − target| ≤ threshold, target stored in `bound`
    Within,
    /// threshold ≤ value ≤ upper
    Between,
}

/// One measured quantity against its threshold.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metric {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub comparison: Comparison,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub bound: Option<f64>,
    pub pass: bool,
}

impl Metric {
    fn build(name: &str, value: f64, threshold: f64, comparison: Comparison, bound: Option<f64>) -> Self {
        let pass = match comparison {
            Comparison::AtMost => value <= threshold,
            Comparison::AtLeast => value >= threshold,
            Comparison::Within => (value - bound.unwrap_or(0.0)).abs() <= threshold,
            Comparison::Between => value >= threshold && value <= bound.unwrap_or(f64::INFINITY),
        };
        Metric { name: name.into(), value, threshold, comparison, bound, pass }
    }

    pub fn at_most(name: &str, value: f64, threshold: f64) -> Self {
        Self::build(name, value, threshold, Comparison::AtMost, None)
    }

    pub fn at_least(name: &str, value: f64, threshold: f64) -> Self {
        Self::build(name, value, threshold, Comparison::AtLeast, None)
    }

    pub fn within(name: &str, value: f64, target: f64, tol: f64) -> Self {
        Self::build(name, value, tol, Comparison::Within, Some(target))
    }

    pub fn between(name: &str, value: f64, lo: f64, hi: f64) -> Self {
        Self::build(name, value, lo, Comparison::Between, Some(hi))
    }

    /// A boolean condition recorded as 1/0 against 1.
    pub fn holds(name: &str, ok: bool) -> Self {
        Self::build(name, if ok { 1.0 } else { 0.0 }, 1.0, Comparison::AtLeast, None)
    }

    pub fn describe(&self) -> String {
        let v = self.value;
        match (self.comparison, self.bound) {
            (Comparison::AtMost, _) => format!("{}={v:.4e}<={:.4e}", self.name, self.threshold),
            (Comparison::AtLeast, _) => format!("{}={v:.4e}>={:.4e}", self.name, self.threshold),
            (Comparison::Within, b) => format!("{}={v:.4e}~{:.4e}+-{:.4e}", self.name, b.unwrap_or(0.0), self.threshold),
            (Comparison::Between, b) => format!("{}={v:.4e}in[{:.4e},{:.4e}]", self.name, self.threshold, b.unwrap_or(f64::INFINITY)),
        }
    }
}

/// A named check; it passes when every metric passes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    /// Acceptance criterion number this check realizes, if any.
    pub criterion: Option<u32>,
    pub metrics: Vec<Metric>,
    pub pass: bool,
    /// Hard failures set a nonzero exit status; soft ones are flags.
    pub hard: bool,
    #[serde(skip_serializing_if = "String::is_empty", default)]
    pub note: String,
}

impl Check {
    pub fn new(name: &str, criterion: u32, metrics: Vec<Metric>) -> Self {
        let pass = metrics.iter().all(|m| m.pass);
        Check { name: name.into(), criterion: Some(criterion), metrics, pass, hard: true, note: String::new() }
    }

    /// A diagnostic that never fails the run.
    pub fn flag(name: &str, metrics: Vec<Metric>) -> Self {
        let pass = metrics.iter().all(|m| m.pass);
        Check { name: name.into(), criterion: None, metrics, pass, hard: false, note: String::new() }
    }

    pub fn note(mut self, note: impl Into<String>) -> Self {
        self.note = note.into();
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    pub package_version: String,
    pub os: String,
    pub arch: String,
    pub debug_build: bool,
}

impl Environment {
    pub fn current() -> Self {
        Environment {
            package_version: env!("CARGO_PKG_VERSION").into(),
            os: std::env::consts::OS.into(),
            arch: std::env::consts::ARCH.into(),
            debug_build: cfg!(debug_assertions),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    pub file: String,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub experiment: String,
    /// sha256 of the canonical config echo; stable across identical runs.
    pub run_id: String,
    /// Seconds since the Unix epoch; the only field that differs between identical runs.
    pub created: u64,
    pub environment: Environment,
    pub config: ExperimentConfig,
    pub checks: Vec<Check>,
    pub artifacts: Vec<Artifact>,
    /// Set when a stage failed; artifacts written before it are kept.
    pub partial: bool,
    pub error: Option<String>,
}

impl RunReport {
    pub fn new(config: &ExperimentConfig) -> Self {
        let echo = serde_json::to_vec(config).expect("config serializes");
        let created = std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        RunReport {
            schema_version: SCHEMA_VERSION,
            experiment: config.experiment.map(|e| e.name().to_string()).unwrap_or_default(),
            run_id: hex::encode(Sha256::digest(&echo)),
            created,
            environment: Environment::current(),
            config: config.clone(),
            checks: Vec::new(),
            artifacts: Vec::new(),
            partial: false,
            error: None,
        }
    }

    pub fn hard_failures(&self) -> usize {
        self.checks.iter().filter(|c| c.hard && !c.pass).count()
    }

    pub fn succeeded(&self) -> bool {
        !self.partial && self.hard_failures() == 0
    }
}

#[derive(Debug, Error)]
pub enum SummaryError {
    #[error("report {index} has schema version {found}, expected {expected}")]
    Schema { index: usize, found: u32, expected: u32 },
    #[error("cannot read report {path}: {msg}")]
    Read { path: String, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub const SUMMARY_COLUMNS: [&str; 8] = ["run_id", "created", "experiment", "check", "criterion", "pass", "hard", "metrics"];

pub fn load_report(path: &Path, index: usize) -> Result<RunReport, SummaryError> {
    let read = |msg: String| SummaryError::Read { path: path.display().to_string(), msg };
    let text = std::fs::read_to_string(path).map_err(|e| read(e.to_string()))?;
    let raw: serde_json::Value = serde_json::from_str(&text).map_err(|e| read(e.to_string()))?;
    let found = raw.get("schema_version").and_then(|v| v.as_u64()).unwrap_or(0) as u32;
    if found != SCHEMA_VERSION {
        return Err(SummaryError::Schema { index, found, expected: SCHEMA_VERSION });
    }
    serde_json::from_value(raw).map_err(|e| read(e.to_string()))
}

/// One CSV row per check per run, columns in `SUMMARY_COLUMNS` order; the
/// returned string is the human-readable rendering.
pub fn report_summary<W: Write>(reports: &[RunReport], mut csv: W) -> Result<String, SummaryError> {
    for (index, r) in reports.iter().enumerate() {
        if r.schema_version != SCHEMA_VERSION {
            return Err(SummaryError::Schema { index, found: r.schema_version, expected: SCHEMA_VERSION });
        }
    }
    writeln!(csv, "{}", SUMMARY_COLUMNS.join(","))?;
    let mut human = String::new();
    for r in reports {
        human.push_str(&format!("{} [{}]\n", r.experiment, &r.run_id[..r.run_id.len().min(12)]));
        for c in &r.checks {
            let crit = c.criterion.map(|n| n.to_string()).unwrap_or_default();
            let metrics: Vec<String> = c.metrics.iter().map(Metric::describe).collect();
            writeln!(csv, "{},{},{},{},{},{},{},{}", r.run_id, r.created, r.experiment, c.name, crit, c.pass, c.hard, metrics.join(";"))?;
            let status = match (c.pass, c.hard) {
                (true, _) => "PASS",
                (false, true) => "FAIL",
                (false, false) => "flag",
            };
            human.push_str(&format!("  [{status}] {:>2} {}\n", crit, c.name));
            for m in &c.metrics {
                human.push_str(&format!("         {}{}\n", if m.pass { "  " } else { "! " }, m.describe()));
            }
        }
    }
    Ok(human)
}
