//! Leakage of one node's value through its component sum, against size.

use rayon::prelude::*;

use super::config::{ExperimentConfig, MiCurveParams};
use super::plot::{render_svg, PlotSpec};
use super::{record, run_json, summarize, ExperimentOutput, Table};
use crate::error::Result;
use crate::privacy::{analytic_mi_asymptotic, analytic_mi_exact, simulate_component_mi, PrivateDataModel};
use crate::seed::derive_seed;

pub const COLUMNS: [&str; 10] = [
    "distribution",
    "m",
    "run",
    "samples",
    "k",
    "simulated_mi",
    "std_error",
    "analytic_exact",
    "analytic_asymptotic",
    "seed",
];

#[derive(Debug, Clone, PartialEq)]
pub struct MiRow {
    pub distribution: &'static str,
    pub m: usize,
    pub run: usize,
    pub simulated: f64,
    pub std_error: f64,
    pub exact: f64,
    pub asymptotic: f64,
    pub seed: u64,
}

pub fn run_seed(master: u64, model: &PrivateDataModel, m: usize, run: usize) -> u64 {
    derive_seed(master, &format!("mi_curve/{}/{m}", model.name()), run as u64)
}

/// One simulated point with its closed forms.
pub fn mi_point(p: &MiCurveParams, model: &PrivateDataModel, m: usize, run: usize, seed: u64) -> Result<MiRow> {
    let est = simulate_component_mi(model, m, p.samples, p.k, seed)?;
    Ok(MiRow {
        distribution: model.name(),
        m,
        run,
        simulated: est.value,
        std_error: est.std_error.unwrap_or(f64::NAN),
        exact: analytic_mi_exact(m)?.nats(),
        asymptotic: analytic_mi_asymptotic(m)?,
        seed,
    })
}

pub fn rows(p: &MiCurveParams, master: u64) -> Result<Vec<MiRow>> {
    let jobs: Vec<(PrivateDataModel, usize, usize)> = p
        .distributions
        .iter()
        .flat_map(|d| {
            p.m_values
                .iter()
                .flat_map(move |&m| (0..p.runs).map(move |r| (*d, m, r)))
        })
        .collect();
    jobs.par_iter()
        .map(|(d, m, r)| mi_point(p, d, *m, *r, run_seed(master, d, *m, *r)))
        .collect()
}

pub(crate) fn run(cfg: &ExperimentConfig, p: &MiCurveParams) -> Result<ExperimentOutput> {
    let rows = rows(p, cfg.master_seed)?;
    let mut table = Table::new("mi_curve", &COLUMNS);
    for r in &rows {
        table.push(vec![
            r.distribution.to_string(),
            r.m.to_string(),
            r.run.to_string(),
            p.samples.to_string(),
            p.k.to_string(),
            r.simulated.to_string(),
            r.std_error.to_string(),
            r.exact.to_string(),
            r.asymptotic.to_string(),
            r.seed.to_string(),
        ]);
    }
    let csv = table.to_csv();
    let svg = render_svg(
        &csv,
        &PlotSpec {
            title: "Leakage against honest component size",
            x: "m",
            ys: &["simulated_mi", "analytic_exact", "analytic_asymptotic"],
            group: &["distribution"],
        },
    )?;
    let summary = summarize(&table, &["distribution", "m"], &["simulated_mi"])?;
    let seeds = rows.iter().map(|r| r.seed).collect();
    let record = record(cfg, seeds, vec![table], summary);
    Ok(ExperimentOutput {
        files: vec![
            ("mi_curve.csv".into(), csv),
            ("mi_curve.svg".into(), svg),
            ("run.json".into(), run_json(&record)?),
        ],
        record,
    })
}
