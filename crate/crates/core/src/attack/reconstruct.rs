//! Recovering honest-component input sums from the adversary's view.
//!
//! Column-stochastic mixing conserves mass, so the only way the total of a
//! component changes between rounds is through its cut edges, and every cut
//! edge ends at a corrupt node. Walking back from the converged output and
//! undoing each round's cut-edge flow gives the initial sum.

use std::cell::RefCell;
use std::collections::BTreeSet;

use crate::adversary::HonestPartition;
use crate::consensus::{MixingMatrix, ObservedMessages};
use crate::error::{invalid, Error, Result};
use crate::graph::Graph;

/// Flow across one directed cut edge: `weight * x_from` moves from `from`
/// into `to` each round.
#[derive(Debug, Clone, Copy)]
struct CutFlow {
    from: usize,
    to: usize,
    weight: f64,
    outgoing: bool,
}

fn cut_flows(g: &Graph, a: &MixingMatrix, comp: &[usize], is_corrupt: &[bool]) -> Vec<CutFlow> {
    let mut flows = Vec::new();
    for &j in comp {
        for &i in g.neighbors(j) {
            if !is_corrupt[i] {
                continue;
            }
            if a.get(i, j) != 0.0 {
                flows.push(CutFlow {
                    from: j,
                    to: i,
                    weight: a.get(i, j),
                    outgoing: true,
                });
            }
            if a.get(j, i) != 0.0 {
                flows.push(CutFlow {
                    from: i,
                    to: j,
                    weight: a.get(j, i),
                    outgoing: false,
                });
            }
        }
    }
    flows
}

/// Initial input sum of every honest component, in partition order.
pub fn reconstruct_partial_sums<V: ObservedMessages>(
    view: &V,
    g: &Graph,
    a: &MixingMatrix,
    p: &HonestPartition,
) -> Result<Vec<Vec<f64>>> {
    let n = g.node_count();
    if a.dim() != n || p.n != n {
        return invalid(format!(
            "dimension mismatch: graph {n}, matrix {}, partition {}",
            a.dim(),
            p.n
        ));
    }
    if !view.converged() {
        return Err(Error::ReconstructionInfeasible(
            "the observed run never converged".into(),
        ));
    }
    if view.round_count() < view.rounds_run() {
        return Err(Error::ReconstructionInfeasible(format!(
            "only {} of {} rounds were recorded",
            view.round_count(),
            view.rounds_run()
        )));
    }
    let mut is_corrupt = vec![false; n];
    for &c in &p.corrupt {
        is_corrupt[c] = true;
    }
    let output = view.output();
    let d = output.len();
    let rounds = view.rounds_run();
    p.components
        .iter()
        .map(|comp| {
            let mut sum: Vec<f64> = output.iter().map(|o| o * comp.len() as f64).collect();
            let flows = cut_flows(g, a, comp, &is_corrupt);
            for r in 0..rounds {
                for f in &flows {
                    let msg = view.message(r, f.from, f.to).ok_or_else(|| {
                        Error::ReconstructionInfeasible(format!(
                            "message {} -> {} of round {r} is not in the view",
                            f.from, f.to
                        ))
                    })?;
                    if msg.len() != d {
                        return invalid("message dimension differs from the output");
                    }
                    let sign = if f.outgoing { f.weight } else { -f.weight };
                    for (s, m) in sum.iter_mut().zip(msg) {
                        *s += sign * m;
                    }
                }
            }
            Ok(sum)
        })
        .collect()
}

/// Wraps a view and records every message lookup.
pub struct TrackedView<'a, V> {
    inner: &'a V,
    accessed: RefCell<BTreeSet<(usize, usize, usize)>>,
}

impl<'a, V: ObservedMessages> TrackedView<'a, V> {
    pub fn new(inner: &'a V) -> Self {
        TrackedView {
            inner,
            accessed: RefCell::new(BTreeSet::new()),
        }
    }

    /// Distinct `(round, from, to)` triples looked up so far.
    pub fn accessed(&self) -> Vec<(usize, usize, usize)> {
        self.accessed.borrow().iter().copied().collect()
    }
}

impl<V: ObservedMessages> ObservedMessages for TrackedView<'_, V> {
    fn round_count(&self) -> usize {
        self.inner.round_count()
    }

    fn rounds_run(&self) -> usize {
        self.inner.rounds_run()
    }

    fn message(&self, r: usize, from: usize, to: usize) -> Option<&[f64]> {
        self.accessed.borrow_mut().insert((r, from, to));
        self.inner.message(r, from, to)
    }

    fn output(&self) -> &[f64] {
        self.inner.output()
    }

    fn converged(&self) -> bool {
        self.inner.converged()
    }
}
