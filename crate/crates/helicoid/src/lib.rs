//! Seeded experiment driver over `helicoid-core`.
//!
//! An experiment turns an [`ExperimentConfig`] into a [`Report`]: one row
//! per trial, computed independently from `(config, trial index)`, followed
//! by summary statistics and pass/fail verdicts. Trials run in parallel
//! across seeds; rows are assembled in trial order, so reports are
//! bit-identical across runs and thread counts.

pub mod config;
pub mod experiments;
pub mod report;

pub use config::{Experiment, ExperimentConfig};
pub use report::{Format, Report, Row, Verdict};

use helicoid_core::exec::{map_range, Exec};
use serde_json::Value;
use std::collections::BTreeMap;
use std::fmt::Display;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    /// Invalid configuration; raised before any trial runs.
    #[error("config error: {0}")]
    Config(String),
    #[error("computation failed: {0}")]
    Compute(String),
    #[error("I/O error: {0}")]
    Io(String),
}

pub(crate) trait OrCompute<T> {
    fn compute(self) -> Result<T, HarnessError>;
    fn config(self) -> Result<T, HarnessError>;
}

impl<T, E: Display> OrCompute<T> for Result<T, E> {
    fn compute(self) -> Result<T, HarnessError> {
        self.map_err(|e| HarnessError::Compute(e.to_string()))
    }

    fn config(self) -> Result<T, HarnessError> {
        self.map_err(|e| HarnessError::Config(e.to_string()))
    }
}

/// A configured experiment.
pub trait Driver: Sync {
    fn trials(&self) -> usize;

    /// Row of trial `index`, without the leading hash/trial/seed columns.
    fn trial(&self, index: usize) -> Result<Row, HarnessError>;

    /// Summary statistics and verdicts over the finished rows.
    fn finish(&self, report: &Report) -> (BTreeMap<String, Value>, Vec<Verdict>);
}

/// Validates `cfg` and prepares its experiment.
pub fn driver(cfg: &ExperimentConfig) -> Result<Box<dyn Driver>, HarnessError> {
    experiments::build(cfg)
}

fn full_row(cfg: &ExperimentConfig, hash: &str, index: usize, row: Row) -> (Vec<String>, Vec<Value>) {
    let mut columns = vec!["config_hash".to_string(), "trial".to_string(), "seed".to_string()];
    let mut values = vec![Value::from(hash), Value::from(index), Value::from(cfg.seed(index))];
    for (c, v) in row {
        columns.push(c.to_string());
        values.push(v);
    }
    (columns, values)
}

pub fn run(cfg: &ExperimentConfig) -> Result<Report, HarnessError> {
    let drv = driver(cfg)?;
    let hash = cfg.hash();
    let rows = map_range(Exec::Auto, drv.trials(), |i| drv.trial(i).map(|r| full_row(cfg, &hash, i, r)));
    let mut columns = Vec::new();
    let mut values = Vec::with_capacity(rows.len());
    for r in rows {
        let (c, v) = r?;
        if columns.is_empty() {
            columns = c;
        } else if columns != c {
            return Err(HarnessError::Compute("rows disagree on their columns".into()));
        }
        values.push(v);
    }
    let mut report = Report {
        experiment: cfg.experiment.name().to_string(),
        config_hash: hash,
        columns,
        rows: values,
        summary: BTreeMap::new(),
        verdicts: Vec::new(),
    };
    let (summary, verdicts) = drv.finish(&report);
    report.summary = summary;
    report.verdicts = verdicts;
    Ok(report)
}

#[derive(Clone, Debug, PartialEq)]
pub struct VerifyOutcome {
    pub checked: usize,
    /// Trial indices whose recomputed row differs from the report.
    pub mismatches: Vec<usize>,
}

/// Recomputes the rows of `report` marked `flagged` (every row with `all`)
/// from `cfg`, after checking that `cfg` hashes to the report's config hash.
pub fn verify(cfg: &ExperimentConfig, report: &Report, all: bool) -> Result<VerifyOutcome, HarnessError> {
    let hash = cfg.hash();
    if hash != report.config_hash {
        return Err(HarnessError::Config(format!("config hash {hash} does not match report hash {}", report.config_hash)));
    }
    let drv = driver(cfg)?;
    let trial_col = report.column("trial").ok_or_else(|| HarnessError::Config("report has no trial column".into()))?;
    let flag_col = report.column("flagged");
    let mut checked = 0;
    let mut mismatches = Vec::new();
    for row in &report.rows {
        if row.first() != Some(&Value::from(hash.as_str())) {
            return Err(HarnessError::Config("row carries a different config hash".into()));
        }
        let flagged = flag_col.is_some_and(|c| row[c] == Value::Bool(true));
        if !(all || flagged) {
            continue;
        }
        let index = row[trial_col].as_u64().ok_or_else(|| HarnessError::Config("bad trial index".into()))? as usize;
        let (_, fresh) = full_row(cfg, &hash, index, drv.trial(index)?);
        checked += 1;
        if &fresh != row {
            mismatches.push(index);
        }
    }
    Ok(VerifyOutcome { checked, mismatches })
}
