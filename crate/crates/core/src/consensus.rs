//! Synchronous linear-iteration average consensus, `x <- A x`.
//!
//! Each node holds a `d`-dimensional state (a gradient, typically); the
//! iteration is applied coordinate-wise. A run can record a transcript of
//! every message sent, from which the adversary view of a corrupt set is cut.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::graph::Graph;
use crate::seed::rng_from_seed;

/// Dense row-major `n x n` mixing matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixingMatrix {
    n: usize,
    entries: Vec<f64>,
}

impl MixingMatrix {
    /// Wraps dense rows without checking any condition.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return invalid("mixing matrix must be square");
        }
        Ok(MixingMatrix {
            n,
            entries: rows.into_iter().flatten().collect(),
        })
    }

    /// `ones / n`, i.e. one-shot averaging on a complete graph.
    pub fn uniform(n: usize) -> Self {
        MixingMatrix {
            n,
            entries: vec![1.0 / n as f64; n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut entries = vec![0.0; n * n];
        for i in 0..n {
            entries[i * n + i] = 1.0;
        }
        MixingMatrix { n, entries }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.n..(i + 1) * self.n]
    }

    /// True when every nonzero off-diagonal entry sits on an edge of `g`.
    pub fn respects(&self, g: &Graph) -> bool {
        if g.node_count() != self.n {
            return false;
        }
        (0..self.n).all(|i| (0..self.n).all(|j| i == j || self.get(i, j) == 0.0 || g.has_edge(i, j)))
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.n).all(|i| (0..i).all(|j| self.get(i, j) == self.get(j, i)))
    }

    /// Dense rows as whitespace-separated decimals, one row per line.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for i in 0..self.n {
            let row: Vec<String> = self.row(i).iter().map(|v| v.to_string()).collect();
            let _ = writeln!(out, "{}", row.join(" "));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut rows = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let row = line
                .split_whitespace()
                .map(|t| {
                    t.parse::<f64>().map_err(|e| Error::Parse {
                        line: idx + 1,
                        message: format!("bad entry {t:?}: {e}"),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            rows.push(row);
        }
        Self::from_rows(rows)
    }
}

/// Metropolis-Hastings weights: `1 / (1 + max(deg i, deg j))` on edges, the
/// remainder on the diagonal.
pub fn metropolis_weights(g: &Graph) -> Result<MixingMatrix> {
    if !g.is_connected() {
        return invalid("metropolis weights need a connected graph");
    }
    let n = g.node_count();
    let mut entries = vec![0.0; n * n];
    for &(i, j) in g.edges() {
        let w = 1.0 / (1 + g.degree(i).max(g.degree(j))) as f64;
        entries[i * n + j] = w;
        entries[j * n + i] = w;
    }
    for i in 0..n {
        let off: f64 = g.neighbors(i).iter().map(|&j| entries[i * n + j]).sum();
        entries[i * n + i] = 1.0 - off;
    }
    Ok(MixingMatrix { n, entries })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    /// `A 1 = 1`
    pub row_ok: bool,
    /// `1^T A = 1^T`
    pub col_ok: bool,
    /// Spectral radius of `A - 11^T / n`.
    pub radius: f64,
    pub contraction_ok: bool,
}

impl ConditionReport {
    pub fn all_ok(&self) -> bool {
        self.row_ok && self.col_ok && self.contraction_ok
    }
}

pub const DEFAULT_CONDITION_TOL: f64 = 1e-9;
const POWER_ITERATIONS: usize = 200;
const POWER_REL_CHANGE: f64 = 1e-10;

/// Checks the three averaging conditions on `a` at tolerance `tol`.
pub fn verify_conditions(a: &MixingMatrix, tol: f64) -> ConditionReport {
    let n = a.n;
    let row_ok = (0..n).all(|i| (a.row(i).iter().sum::<f64>() - 1.0).abs() <= tol);
    let col_ok = (0..n).all(|j| ((0..n).map(|i| a.get(i, j)).sum::<f64>() - 1.0).abs() <= tol);
    let radius = disagreement_radius(a);
    ConditionReport {
        row_ok,
        col_ok,
        radius,
        contraction_ok: radius < 1.0 - tol,
    }
}

/// Power iteration on `B = A - 11^T/n`, tracking `||B v||` for unit `v`.
fn disagreement_radius(a: &MixingMatrix) -> f64 {
    let n = a.n;
    if n == 0 {
        return 0.0;
    }
    let mut rng = rng_from_seed(0x5eed_0f_a1fa);
    let mut v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let norm = l2(&v);
    v.iter_mut().for_each(|x| *x /= norm);
    let mut estimate = 0.0;
    for _ in 0..POWER_ITERATIONS {
        let mean = v.iter().sum::<f64>() / n as f64;
        let w: Vec<f64> = (0..n)
            .map(|i| a.row(i).iter().zip(&v).map(|(aij, vj)| aij * vj).sum::<f64>() - mean)
            .collect();
        let next = l2(&w);
        if next == 0.0 {
            return 0.0;
        }
        let change = (next - estimate).abs();
        estimate = next;
        v = w.into_iter().map(|x| x / next).collect();
        if change <= POWER_REL_CHANGE * estimate {
            break;
        }
    }
    estimate
}

fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// One `d`-vector per node, stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeVectors {
    n: usize,
    d: usize,
    data: Vec<f64>,
}

impl NodeVectors {
    pub fn new(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let d = rows.first().map_or(0, Vec::len);
        if d == 0 {
            return invalid("node vectors must have dimension at least 1");
        }
        if rows.iter().any(|r| r.len() != d) {
            return invalid("node vectors must all have the same dimension");
        }
        Ok(NodeVectors {
            n,
            d,
            data: rows.concat(),
        })
    }

    pub fn scalars(values: &[f64]) -> Result<Self> {
        Self::new(&values.iter().map(|&v| vec![v]).collect::<Vec<_>>())
    }

    pub fn nodes(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.n).map(|i| self.row(i).to_vec()).collect()
    }

    /// Coordinate-wise mean over nodes.
    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.d];
        for i in 0..self.n {
            for (acc, v) in m.iter_mut().zip(self.row(i)) {
                *acc += v;
            }
        }
        m.iter_mut().for_each(|v| *v /= self.n as f64);
        m
    }

    /// `max_i ||x_i - target||_inf`
    pub fn max_deviation(&self, target: &[f64]) -> f64 {
        (0..self.n)
            .flat_map(|i| self.row(i).iter().zip(target).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max)
    }

    fn max_difference(&self, other: &NodeVectors) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    fn mix(&self, g: &Graph, a: &MixingMatrix) -> NodeVectors {
        let d = self.d;
        let mut out = vec![0.0; self.data.len()];
        for i in 0..self.n {
            let dst = &mut out[i * d..(i + 1) * d];
            let aii = a.get(i, i);
            for (o, x) in dst.iter_mut().zip(self.row(i)) {
                *o = aii * x;
            }
            for &j in g.neighbors(i) {
                let aij = a.get(i, j);
                if aij != 0.0 {
                    for (o, x) in dst.iter_mut().zip(self.row(j)) {
                        *o += aij * x;
                    }
                }
            }
        }
        NodeVectors {
            n: self.n,
            d,
            data: out,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum StopRule {
    /// Stop once every node is within `tol` of the true initial mean.
    #[default]
    TrueMean,
    /// Stop once no coordinate moved more than `tol` in the last round.
    SuccessiveDifference,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConsensusOptions {
    pub tol: f64,
    pub max_rounds: usize,
    pub record: bool,
    pub stop: StopRule,
}

impl Default for ConsensusOptions {
    fn default() -> Self {
        ConsensusOptions {
            tol: 1e-8,
            max_rounds: 100_000,
            record: false,
            stop: StopRule::TrueMean,
        }
    }
}

/// State of the iteration after some number of rounds.
#[derive(Debug, Clone, PartialEq)]
pub struct ConsensusState {
    pub round: usize,
    pub x: NodeVectors,
}

#[derive(Debug, Clone)]
pub struct ConsensusOutcome {
    pub state: ConsensusState,
    pub converged: bool,
    pub transcript: Option<Transcript>,
}

impl ConsensusOutcome {
    pub fn rounds_used(&self) -> usize {
        self.state.round
    }
}

/// Iterates `x <- A x` from `x0` until the stop rule holds or `max_rounds`
/// is reached. Non-convergence is reported through `converged`, not an error.
pub fn run_consensus(
    g: &Graph,
    a: &MixingMatrix,
    x0: &NodeVectors,
    opts: &ConsensusOptions,
) -> Result<ConsensusOutcome> {
    let n = g.node_count();
    if a.dim() != n || x0.nodes() != n {
        return invalid(format!(
            "dimension mismatch: graph {n}, matrix {}, states {}",
            a.dim(),
            x0.nodes()
        ));
    }
    if !a.respects(g) {
        return invalid("mixing matrix has weight on a non-edge");
    }
    let target = x0.mean();
    let mut x = x0.clone();
    let mut recorded = Vec::new();
    let mut round = 0;
    let mut converged = opts.stop == StopRule::TrueMean && x.max_deviation(&target) <= opts.tol;
    while !converged && round < opts.max_rounds {
        let next = x.mix(g, a);
        round += 1;
        converged = match opts.stop {
            StopRule::TrueMean => next.max_deviation(&target) <= opts.tol,
            StopRule::SuccessiveDifference => next.max_difference(&x) <= opts.tol,
        };
        if opts.record {
            recorded.push(std::mem::replace(&mut x, next));
        } else {
            x = next;
        }
    }
    let transcript = opts.record.then(|| Transcript {
        graph: g.clone(),
        rounds: recorded,
        final_state: x.clone(),
        converged,
    });
    Ok(ConsensusOutcome {
        state: ConsensusState { round, x },
        converged,
        transcript,
    })
}

/// Every message of a recorded run. Round `r` carries `x_i^(r)` on each
/// directed edge `i -> j`.
#[derive(Debug, Clone, PartialEq)]
pub struct Transcript {
    graph: Graph,
    rounds: Vec<NodeVectors>,
    final_state: NodeVectors,
    converged: bool,
}

impl Transcript {
    pub fn round_count(&self) -> usize {
        self.rounds.len()
    }

    pub fn converged(&self) -> bool {
        self.converged
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn final_state(&self) -> &NodeVectors {
        &self.final_state
    }

    /// Network state at the start of round `r`.
    pub fn state(&self, r: usize) -> Option<&NodeVectors> {
        self.rounds.get(r)
    }

    pub fn message(&self, r: usize, from: usize, to: usize) -> Option<&[f64]> {
        if !self.graph.has_edge(from, to) {
            return None;
        }
        self.rounds.get(r).map(|x| x.row(from))
    }

    /// All `2|E|` messages of round `r`, ordered by (from, to).
    pub fn messages(&self, r: usize) -> impl Iterator<Item = (usize, usize, &[f64])> + '_ {
        let x = &self.rounds[r];
        (0..self.graph.node_count()).flat_map(move |i| self.graph.neighbors(i).iter().map(move |&j| (i, j, x.row(i))))
    }

    /// Line-oriented dump: `r i j v1 v2 ...`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for r in 0..self.rounds.len() {
            for (i, j, v) in self.messages(r) {
                let _ = write!(out, "{r} {i} {j}");
                for x in v {
                    let _ = write!(out, " {x}");
                }
                out.push('\n');
            }
        }
        out
    }
}

/// Read access to observed messages. The reconstruction attack is written
/// against this trait so tests can audit which messages it touches.
pub trait ObservedMessages {
    fn round_count(&self) -> usize;
    /// Rounds the protocol actually ran; may exceed `round_count` if the
    /// record was truncated.
    fn rounds_run(&self) -> usize;
    fn message(&self, r: usize, from: usize, to: usize) -> Option<&[f64]>;
    /// The protocol output (the network average).
    fn output(&self) -> &[f64];
    /// Whether the observed run reached its tolerance.
    fn converged(&self) -> bool;
}

/// What the colluding corrupt nodes jointly see: their own inputs, their
/// (empty) randomness, every message they sent or received, and the output.
#[derive(Debug, Clone, PartialEq)]
pub struct AdversaryView {
    pub corrupt: Vec<usize>,
    pub corrupt_inputs: Vec<(usize, Vec<f64>)>,
    /// Linear iterations are deterministic, so this is always empty.
    pub randomness: Vec<f64>,
    pub messages: Vec<BTreeMap<(usize, usize), Vec<f64>>>,
    pub output: Vec<f64>,
    pub rounds_run: usize,
    pub converged: bool,
}

impl AdversaryView {
    pub fn message_count(&self) -> usize {
        self.messages.iter().map(BTreeMap::len).sum()
    }
}

impl ObservedMessages for AdversaryView {
    fn round_count(&self) -> usize {
        self.messages.len()
    }

    fn rounds_run(&self) -> usize {
        self.rounds_run
    }

    fn message(&self, r: usize, from: usize, to: usize) -> Option<&[f64]> {
        self.messages.get(r)?.get(&(from, to)).map(Vec::as_slice)
    }

    fn output(&self) -> &[f64] {
        &self.output
    }

    fn converged(&self) -> bool {
        self.converged
    }
}

/// Cuts the adversary's view out of a full transcript.
pub fn adversary_view(
    t: &Transcript,
    g: &Graph,
    corrupt: &[usize],
    corrupt_inputs: Vec<(usize, Vec<f64>)>,
    output: Vec<f64>,
) -> Result<AdversaryView> {
    if t.graph != *g {
        return invalid("transcript was recorded on a different graph");
    }
    let n = g.node_count();
    let mut is_corrupt = vec![false; n];
    for &c in corrupt {
        if c >= n {
            return invalid(format!("corrupt node {c} out of range for n={n}"));
        }
        is_corrupt[c] = true;
    }
    let messages = (0..t.round_count())
        .map(|r| {
            t.messages(r)
                .filter(|&(i, j, _)| is_corrupt[i] || is_corrupt[j])
                .map(|(i, j, v)| ((i, j), v.to_vec()))
                .collect()
        })
        .collect();
    let mut corrupt: Vec<usize> = corrupt.to_vec();
    corrupt.sort_unstable();
    corrupt.dedup();
    Ok(AdversaryView {
        corrupt,
        corrupt_inputs,
        randomness: Vec::new(),
        messages,
        output,
        rounds_run: t.round_count(),
        converged: t.converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn metropolis_examples() {
        let a = metropolis_weights(&Graph::complete(3)).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert!(close(a.get(i, j), 1.0 / 3.0, 1e-15));
            }
        }

        let a = metropolis_weights(&Graph::cycle(4)).unwrap();
        assert!(close(a.get(0, 1), 1.0 / 3.0, 1e-15));
        assert_eq!(a.get(0, 2), 0.0);
        assert!(close(a.get(0, 0), 1.0 / 3.0, 1e-15));
        let report = verify_conditions(&a, DEFAULT_CONDITION_TOL);
        assert!(report.all_ok());
        assert!(close(report.radius, 1.0 / 3.0, 1e-6), "{}", report.radius);

        let a = metropolis_weights(&Graph::path(3)).unwrap();
        assert!(close(a.get(0, 1), 1.0 / 3.0, 1e-15));
        assert!(close(a.get(0, 0), 2.0 / 3.0, 1e-15));
        assert!(close(a.get(1, 1), 1.0 / 3.0, 1e-15));

        assert!(metropolis_weights(&Graph::empty(3)).is_err());
    }

    #[test]
    fn condition_examples() {
        let r = verify_conditions(&MixingMatrix::uniform(5), DEFAULT_CONDITION_TOL);
        assert!(r.all_ok());
        assert!(r.radius < 1e-12);

        let r = verify_conditions(&MixingMatrix::identity(4), DEFAULT_CONDITION_TOL);
        assert!(r.row_ok && r.col_ok);
        assert!(!r.contraction_ok);
        assert!(close(r.radius, 1.0, 1e-9));

        // Row-stochastic only.
        let a = MixingMatrix::from_rows(vec![vec![0.5, 0.5], vec![0.0, 1.0]]).unwrap();
        let r = verify_conditions(&a, DEFAULT_CONDITION_TOL);
        assert!(r.row_ok && !r.col_ok);
    }

    #[test]
    fn one_round_on_complete_graph() {
        let g = Graph::complete(3);
        let x0 = NodeVectors::scalars(&[0.0, 3.0, 6.0]).unwrap();
        let out = run_consensus(&g, &MixingMatrix::uniform(3), &x0, &ConsensusOptions::default()).unwrap();
        assert_eq!(out.rounds_used(), 1);
        assert!(out.converged);
        for i in 0..3 {
            assert!(close(out.state.x.row(i)[0], 3.0, 1e-12));
        }
    }

    #[test]
    fn constant_input_is_a_fixed_point() {
        let g = Graph::cycle(6);
        let a = metropolis_weights(&g).unwrap();
        let x0 = NodeVectors::new(&vec![vec![2.5, -1.0]; 6]).unwrap();
        let out = run_consensus(&g, &a, &x0, &ConsensusOptions::default()).unwrap();
        assert_eq!(out.rounds_used(), 0);
        assert!(out.converged);
    }

    #[test]
    fn reports_non_convergence() {
        let g = Graph::path(30);
        let a = metropolis_weights(&g).unwrap();
        let x0 = NodeVectors::scalars(&(0..30).map(|i| i as f64).collect::<Vec<_>>()).unwrap();
        let opts = ConsensusOptions {
            max_rounds: 5,
            ..Default::default()
        };
        let out = run_consensus(&g, &a, &x0, &opts).unwrap();
        assert!(!out.converged);
        assert_eq!(out.rounds_used(), 5);
    }

    #[test]
    fn successive_difference_stops() {
        let g = Graph::cycle(8);
        let a = metropolis_weights(&g).unwrap();
        let x0 = NodeVectors::scalars(&[1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        let opts = ConsensusOptions {
            stop: StopRule::SuccessiveDifference,
            tol: 1e-10,
            ..Default::default()
        };
        let out = run_consensus(&g, &a, &x0, &opts).unwrap();
        assert!(out.converged);
        assert!(out.state.x.max_deviation(&[0.125]) < 1e-8);
    }

    #[test]
    fn rejects_weight_off_the_graph() {
        let g = Graph::path(3);
        let x0 = NodeVectors::scalars(&[1.0, 2.0, 3.0]).unwrap();
        assert!(run_consensus(&g, &MixingMatrix::uniform(3), &x0, &Default::default()).is_err());
    }

    #[test]
    fn transcript_and_views() {
        let g = Graph::path(3);
        let a = metropolis_weights(&g).unwrap();
        let x0 = NodeVectors::scalars(&[3.0, 0.0, -3.0]).unwrap();
        let opts = ConsensusOptions {
            record: true,
            tol: 1e-10,
            ..Default::default()
        };
        let out = run_consensus(&g, &a, &x0, &opts).unwrap();
        let t = out.transcript.unwrap();
        assert_eq!(t.round_count(), out.state.round);
        for r in 0..t.round_count() {
            assert_eq!(t.messages(r).count(), 2 * g.edge_count());
        }
        assert_eq!(t.message(0, 0, 1), Some(&[3.0][..]));
        assert_eq!(t.message(0, 0, 2), None);

        let output = out.state.x.row(1).to_vec();
        let view = adversary_view(&t, &g, &[], vec![], output.clone()).unwrap();
        assert_eq!(view.message_count(), 0);
        assert_eq!(view.output, output);

        let view = adversary_view(&t, &g, &[0, 1, 2], vec![], output.clone()).unwrap();
        assert_eq!(view.message_count(), 4 * t.round_count());

        let view = adversary_view(&t, &g, &[1], vec![(1, vec![0.0])], output).unwrap();
        for r in 0..t.round_count() {
            assert_eq!(view.message(r, 0, 1), t.message(r, 0, 1));
            assert_eq!(view.message(r, 2, 1), t.message(r, 2, 1));
        }
        assert!(view
            .messages
            .iter()
            .flat_map(|m| m.keys())
            .all(|&(i, j)| i == 1 || j == 1));

        let text = t.to_text();
        assert!(text.starts_with("0 0 1 3\n0 1 0 0\n0 1 2 0\n0 2 1 -3\n"));
    }

    #[test]
    fn matrix_text_round_trip() {
        let a = metropolis_weights(&Graph::cycle(5)).unwrap();
        assert_eq!(MixingMatrix::from_text(&a.to_text()).unwrap(), a);
        assert!(MixingMatrix::from_text("1 0\n0\n").is_err());
    }
}
