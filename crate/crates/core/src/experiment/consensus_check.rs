//! Mixing-matrix conditions and convergence speed on generated graphs.

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use super::config::{ConsensusCheckParams, ExperimentConfig};
use super::{record, run_json, summarize, ExperimentOutput, Table};
use crate::consensus::{
    metropolis_weights, run_consensus, verify_conditions, ConsensusOptions, MixingMatrix, NodeVectors,
    DEFAULT_CONDITION_TOL,
};
use crate::error::{Error, Result};
use crate::graph::{Graph, Topology};
use crate::seed::{child_seed, derive_seed, rng_from_seed};

pub const COLUMNS: [&str; 13] = [
    "topology",
    "run",
    "n",
    "edges",
    "row_ok",
    "col_ok",
    "radius",
    "contraction_ok",
    "rounds",
    "converged",
    "final_error",
    "max_mass_drift",
    "seed",
];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckRow {
    pub topology: String,
    pub run: usize,
    pub n: usize,
    pub edges: usize,
    pub row_ok: bool,
    pub col_ok: bool,
    pub radius: f64,
    pub contraction_ok: bool,
    pub rounds: usize,
    pub converged: bool,
    /// Largest distance of any node from the true mean at the end.
    pub final_error: f64,
    /// Largest deviation of the state mean from the initial mean over all
    /// recorded rounds.
    pub max_mass_drift: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize)]
struct Report<'a> {
    all_conditions_ok: bool,
    all_converged: bool,
    runs: &'a [CheckRow],
}

/// Runs consensus on random Gaussian scalars and audits the run.
pub fn check_matrix(
    label: &str,
    run: usize,
    g: &Graph,
    a: &MixingMatrix,
    p: &ConsensusCheckParams,
    seed: u64,
) -> Result<CheckRow> {
    let report = verify_conditions(a, DEFAULT_CONDITION_TOL);
    let mut rng = rng_from_seed(child_seed(seed, 2));
    let values: Vec<f64> = (0..g.node_count()).map(|_| StandardNormal.sample(&mut rng)).collect();
    let x0 = NodeVectors::scalars(&values)?;
    let opts = ConsensusOptions {
        tol: p.tol,
        max_rounds: p.max_rounds,
        record: true,
        stop: p.stop,
    };
    let out = run_consensus(g, a, &x0, &opts)?;
    let target = x0.mean();
    let t = out.transcript.as_ref().expect("recorded");
    let max_mass_drift = (0..t.round_count())
        .filter_map(|r| t.state(r))
        .chain(std::iter::once(t.final_state()))
        .map(|x| (x.mean()[0] - target[0]).abs())
        .fold(0.0, f64::max);
    Ok(CheckRow {
        topology: label.to_string(),
        run,
        n: g.node_count(),
        edges: g.edge_count(),
        row_ok: report.row_ok,
        col_ok: report.col_ok,
        radius: report.radius,
        contraction_ok: report.contraction_ok,
        rounds: out.rounds_used(),
        converged: out.converged,
        final_error: out.state.x.max_deviation(&target),
        max_mass_drift,
        seed,
    })
}

pub fn run_seed(master: u64, topology: &Topology, run: usize) -> u64 {
    derive_seed(master, &format!("consensus_check/{}", topology.name()), run as u64)
}

pub fn rows(p: &ConsensusCheckParams, master: u64) -> Result<Vec<CheckRow>> {
    let jobs: Vec<(Topology, usize)> = p
        .topologies
        .iter()
        .flat_map(|t| (0..p.runs).map(move |r| (*t, r)))
        .collect();
    let mut rows: Vec<CheckRow> = jobs
        .par_iter()
        .map(|(t, r)| {
            let seed = run_seed(master, t, *r);
            let g = t.generate_connected(p.n, p.m, child_seed(seed, 1))?;
            let a = metropolis_weights(&g)?;
            check_matrix(t.name(), *r, &g, &a, p, seed)
        })
        .collect::<Result<_>>()?;
    if p.include_complete {
        let seed = derive_seed(master, "consensus_check/complete", 0);
        let g = Graph::complete(p.n);
        rows.push(check_matrix(
            "complete_uniform",
            0,
            &g,
            &MixingMatrix::uniform(p.n),
            p,
            seed,
        )?);
    }
    Ok(rows)
}

pub(crate) fn run(cfg: &ExperimentConfig, p: &ConsensusCheckParams) -> Result<ExperimentOutput> {
    let rows = rows(p, cfg.master_seed)?;
    let mut table = Table::new("consensus_check", &COLUMNS);
    for r in &rows {
        table.push(vec![
            r.topology.clone(),
            r.run.to_string(),
            r.n.to_string(),
            r.edges.to_string(),
            r.row_ok.to_string(),
            r.col_ok.to_string(),
            r.radius.to_string(),
            r.contraction_ok.to_string(),
            r.rounds.to_string(),
            r.converged.to_string(),
            r.final_error.to_string(),
            r.max_mass_drift.to_string(),
            r.seed.to_string(),
        ]);
    }
    let report = Report {
        all_conditions_ok: rows.iter().all(|r| r.row_ok && r.col_ok && r.contraction_ok),
        all_converged: rows.iter().all(|r| r.converged),
        runs: &rows,
    };
    let json = serde_json::to_string_pretty(&report).map_err(|e| Error::Io(e.to_string()))?;
    let summary = summarize(&table, &["topology"], &["radius", "rounds", "max_mass_drift"])?;
    let seeds = rows.iter().map(|r| r.seed).collect();
    let record = record(cfg, seeds, vec![table.clone()], summary);
    Ok(ExperimentOutput {
        files: vec![
            ("consensus_check.csv".into(), table.to_csv()),
            ("consensus_check.json".into(), json),
            ("run.json".into(), run_json(&record)?),
        ],
        record,
    })
}
