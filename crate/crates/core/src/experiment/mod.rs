//! Seeded batch experiments with CSV, JSON, SVG and PGM output.
//!
//! Every run gets its seed from `derive_seed(master_seed, label, index)`,
//! runs execute on a rayon pool of the configured size, and results are
//! collected in run order, so raw output does not depend on the worker
//! count.

pub mod config;
pub mod consensus_check;
pub mod inversion_quality;
pub mod mi_curve;
pub mod plot;
pub mod stats;
pub mod topology_attack;

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use config::{ExperimentConfig, ExperimentKind, ExperimentParams};
pub use stats::{spearman, Summary};

use crate::error::{Error, Result};

/// A CSV table with fixed columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Table {
            name: name.to_string(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.columns.join(",");
        out.push('\n');
        for r in &self.rows {
            out.push_str(&r.join(","));
            out.push('\n');
        }
        out
    }

    pub fn from_csv(name: &str, text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let columns: Vec<String> = lines
            .next()
            .ok_or_else(|| Error::Config(format!("{name}: empty CSV")))?
            .split(',')
            .map(str::to_string)
            .collect();
        let rows: Vec<Vec<String>> = lines
            .filter(|l| !l.is_empty())
            .map(|l| l.split(',').map(str::to_string).collect())
            .collect();
        if rows.iter().any(|r| r.len() != columns.len()) {
            return Err(Error::Config(format!("{name}: ragged CSV")));
        }
        Ok(Table {
            name: name.to_string(),
            columns,
            rows,
        })
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// Numeric values of a column; blank or unparsable cells are skipped.
    pub fn values(&self, name: &str) -> Vec<f64> {
        let Some(i) = self.column(name) else {
            return Vec::new();
        };
        self.rows.iter().filter_map(|r| r[i].parse().ok()).collect()
    }
}

/// Formats an optional value as a CSV cell; `None` is left blank.
pub(crate) fn cell<T: Display>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryEntry {
    pub table: String,
    pub group: BTreeMap<String, String>,
    pub metric: String,
    pub mean: f64,
    pub std: f64,
    pub count: usize,
}

/// Groups `table` rows by `group` columns (first-appearance order) and
/// summarizes each metric column. Blank cells are not counted and groups
/// without any value for a metric get no entry.
pub fn summarize(table: &Table, group: &[&str], metrics: &[&str]) -> Result<Vec<SummaryEntry>> {
    let gi: Vec<usize> = group
        .iter()
        .map(|g| table.column(g).ok_or_else(|| Error::Config(format!("no column {g}"))))
        .collect::<Result<_>>()?;
    let mi: Vec<usize> = metrics
        .iter()
        .map(|m| table.column(m).ok_or_else(|| Error::Config(format!("no column {m}"))))
        .collect::<Result<_>>()?;
    let mut keys: Vec<Vec<String>> = Vec::new();
    let mut values: Vec<Vec<Vec<f64>>> = Vec::new();
    for row in &table.rows {
        let key: Vec<String> = gi.iter().map(|&i| row[i].clone()).collect();
        let slot = match keys.iter().position(|k| *k == key) {
            Some(s) => s,
            None => {
                keys.push(key);
                values.push(vec![Vec::new(); mi.len()]);
                keys.len() - 1
            }
        };
        for (j, &c) in mi.iter().enumerate() {
            if let Ok(v) = row[c].parse::<f64>() {
                values[slot][j].push(v);
            }
        }
    }
    let mut out = Vec::new();
    for (key, vals) in keys.iter().zip(&values) {
        for (metric, v) in metrics.iter().zip(vals) {
            if v.is_empty() {
                continue;
            }
            let s = Summary::of(v);
            out.push(SummaryEntry {
                table: table.name.clone(),
                group: group.iter().map(|g| g.to_string()).zip(key.iter().cloned()).collect(),
                metric: metric.to_string(),
                mean: s.mean,
                std: s.std,
                count: s.count,
            });
        }
    }
    Ok(out)
}

/// Machine-readable account of one experiment invocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub experiment: String,
    pub config_hash: String,
    pub config: String,
    pub master_seed: u64,
    /// Seed of every run, in run order.
    pub seeds: Vec<u64>,
    pub raw: Vec<Table>,
    pub summary: Vec<SummaryEntry>,
}

/// Everything an experiment produces, as relative path and contents.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutput {
    pub record: RunRecord,
    pub files: Vec<(String, String)>,
}

impl ExperimentOutput {
    pub fn file(&self, name: &str) -> Option<&str> {
        self.files.iter().find(|(n, _)| n == name).map(|(_, c)| c.as_str())
    }

    pub fn write_to(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        for (name, contents) in &self.files {
            let path = dir.join(name);
            if let Some(parent) = path.parent() {
                std::fs::create_dir_all(parent)?;
            }
            std::fs::write(path, contents)?;
        }
        Ok(())
    }
}

pub(crate) fn record(
    cfg: &ExperimentConfig,
    seeds: Vec<u64>,
    raw: Vec<Table>,
    summary: Vec<SummaryEntry>,
) -> RunRecord {
    RunRecord {
        experiment: cfg.kind().id().to_string(),
        config_hash: cfg.hash(),
        config: cfg.canonical_text(),
        master_seed: cfg.master_seed,
        seeds,
        raw,
        summary,
    }
}

pub(crate) fn run_json(record: &RunRecord) -> Result<String> {
    serde_json::to_string_pretty(record).map_err(|e| Error::Io(e.to_string()))
}

/// Runs `f` on a pool with `workers` threads, or the global pool.
pub(crate) fn with_workers<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match workers {
        None => Ok(f()),
        Some(w) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(w)
                .build()
                .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

/// Runs the configured experiment without touching the filesystem.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    cfg.validate()?;
    with_workers(cfg.workers, || match &cfg.params {
        ExperimentParams::MiCurve(p) => mi_curve::run(cfg, p),
        ExperimentParams::TopologyAttack(p) => topology_attack::run(cfg, p),
        ExperimentParams::InversionQuality(p) => inversion_quality::run(cfg, p),
        ExperimentParams::ConsensusCheck(p) => consensus_check::run(cfg, p),
    })?
}
