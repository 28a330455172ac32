//! Passive colluding adversary: corrupt-node selection and the honest
//! components left once corrupt nodes are removed.

use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::graph::{connected_components, induced_subgraph, Graph, Topology};
use crate::seed::{derive_seed, rng_from_seed};

/// How many nodes to corrupt.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Amount {
    Count(usize),
    /// Fraction of `n`, rounded down.
    Fraction(f64),
}

impl Amount {
    pub fn resolve(&self, n: usize) -> Result<usize> {
        match *self {
            Amount::Count(c) if c <= n => Ok(c),
            Amount::Count(c) => invalid(format!("cannot corrupt {c} of {n} nodes")),
            Amount::Fraction(f) if (0.0..=1.0).contains(&f) => {
                // The epsilon keeps e.g. 0.3 * 10 from flooring to 2.
                Ok(((f * n as f64) + 1e-9).floor() as usize)
            }
            Amount::Fraction(f) => invalid(format!("fraction {f} outside [0, 1]")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorruptionStrategy {
    /// Highest degree first, ties by ascending id. With `adaptive`, degrees
    /// are recomputed on the remaining graph after each removal.
    DegreeTargeted {
        amount: Amount,
        adaptive: bool,
    },
    UniformRandom {
        amount: Amount,
    },
    Explicit(Vec<usize>),
}

impl CorruptionStrategy {
    pub fn targeted(amount: Amount) -> Self {
        CorruptionStrategy::DegreeTargeted {
            amount,
            adaptive: false,
        }
    }

    pub fn with_amount(&self, amount: Amount) -> Self {
        match self {
            CorruptionStrategy::DegreeTargeted { adaptive, .. } => CorruptionStrategy::DegreeTargeted {
                amount,
                adaptive: *adaptive,
            },
            CorruptionStrategy::UniformRandom { .. } => CorruptionStrategy::UniformRandom { amount },
            CorruptionStrategy::Explicit(set) => CorruptionStrategy::Explicit(set.clone()),
        }
    }
}

/// Selects the corrupt node set, returned sorted ascending.
pub fn select_corrupt(g: &Graph, strategy: &CorruptionStrategy, seed: u64) -> Result<Vec<usize>> {
    let n = g.node_count();
    let mut chosen = match strategy {
        CorruptionStrategy::DegreeTargeted { amount, adaptive } => {
            let c = amount.resolve(n)?;
            if *adaptive {
                adaptive_targets(g, c)
            } else {
                degree_order(g).into_iter().take(c).collect()
            }
        }
        CorruptionStrategy::UniformRandom { amount } => {
            let c = amount.resolve(n)?;
            let mut rng = rng_from_seed(seed);
            index::sample(&mut rng, n, c).into_vec()
        }
        CorruptionStrategy::Explicit(set) => {
            if let Some(&bad) = set.iter().find(|&&v| v >= n) {
                return invalid(format!("corrupt node {bad} out of range for n={n}"));
            }
            set.clone()
        }
    };
    chosen.sort_unstable();
    chosen.dedup();
    Ok(chosen)
}

/// All nodes ordered by descending degree, ties by ascending id.
pub fn degree_order(g: &Graph) -> Vec<usize> {
    let mut order: Vec<usize> = (0..g.node_count()).collect();
    order.sort_by(|&a, &b| g.degree(b).cmp(&g.degree(a)).then(a.cmp(&b)));
    order
}

fn adaptive_targets(g: &Graph, c: usize) -> Vec<usize> {
    let n = g.node_count();
    let mut removed = vec![false; n];
    let mut degree: Vec<usize> = (0..n).map(|i| g.degree(i)).collect();
    let mut out = Vec::with_capacity(c);
    for _ in 0..c {
        let pick = (0..n)
            .filter(|&i| !removed[i])
            .max_by(|&a, &b| degree[a].cmp(&degree[b]).then(b.cmp(&a)))
            .expect("c <= n");
        removed[pick] = true;
        for &v in g.neighbors(pick) {
            if !removed[v] {
                degree[v] -= 1;
            }
        }
        out.push(pick);
    }
    out
}

/// Corrupt set plus the honest components of the remaining subgraph.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HonestPartition {
    pub n: usize,
    pub corrupt: Vec<usize>,
    /// Each component sorted, ordered by smallest member.
    pub components: Vec<Vec<usize>>,
}

impl HonestPartition {
    pub fn sizes(&self) -> Vec<usize> {
        self.components.iter().map(Vec::len).collect()
    }

    pub fn count(&self) -> usize {
        self.components.len()
    }

    pub fn largest(&self) -> usize {
        self.components.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn singleton_count(&self) -> usize {
        self.components.iter().filter(|c| c.len() == 1).count()
    }

    pub fn honest_count(&self) -> usize {
        self.n - self.corrupt.len()
    }

    pub fn is_corrupt(&self, v: usize) -> bool {
        self.corrupt.binary_search(&v).is_ok()
    }

    /// Component index per node; `None` for corrupt nodes.
    pub fn component_of(&self) -> Vec<Option<usize>> {
        let mut of = vec![None; self.n];
        for (k, comp) in self.components.iter().enumerate() {
            for &v in comp {
                of[v] = Some(k);
            }
        }
        of
    }
}

pub fn honest_partition(g: &Graph, corrupt: &[usize]) -> Result<HonestPartition> {
    let n = g.node_count();
    let mut corrupt = corrupt.to_vec();
    corrupt.sort_unstable();
    corrupt.dedup();
    if let Some(&bad) = corrupt.iter().find(|&&v| v >= n) {
        return invalid(format!("corrupt node {bad} out of range for n={n}"));
    }
    let honest: Vec<usize> = (0..n).filter(|v| corrupt.binary_search(v).is_err()).collect();
    let sub = induced_subgraph(g, &honest)?;
    let components = connected_components(&sub.graph)
        .into_iter()
        .map(|c| c.into_iter().map(|k| sub.new_to_old[k]).collect())
        .collect();
    Ok(HonestPartition { n, corrupt, components })
}

/// Mean component statistics at one corruption level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileRow {
    pub fraction: f64,
    pub mean_largest: f64,
    pub mean_count: f64,
    pub mean_singletons: f64,
    pub runs: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProfileSpec {
    pub topology: Topology,
    pub n: usize,
    pub m: usize,
    /// Resample until connected before corrupting.
    pub connected: bool,
}

/// Monte Carlo means of honest-component statistics over `runs` graphs per
/// fraction. Run `r` uses the same graph at every fraction.
pub fn component_size_profile(
    spec: &ProfileSpec,
    strategy: &CorruptionStrategy,
    fractions: &[f64],
    runs: usize,
    master_seed: u64,
) -> Result<Vec<ProfileRow>> {
    if runs == 0 {
        return invalid("runs must be at least 1");
    }
    let per_run: Vec<Vec<(usize, usize, usize)>> = (0..runs)
        .into_par_iter()
        .map(|run| -> Result<Vec<(usize, usize, usize)>> {
            let seed = derive_seed(master_seed, "component_profile", run as u64);
            let g = if spec.connected {
                spec.topology.generate_connected(spec.n, spec.m, seed)?
            } else {
                spec.topology.generate(spec.n, spec.m, seed)?
            };
            fractions
                .iter()
                .map(|&f| {
                    let corrupt = select_corrupt(&g, &strategy.with_amount(Amount::Fraction(f)), seed)?;
                    let p = honest_partition(&g, &corrupt)?;
                    Ok((p.largest(), p.count(), p.singleton_count()))
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    // Integer sums, so the result does not depend on reduction order.
    let mut sums = vec![(0usize, 0usize, 0usize); fractions.len()];
    for row in &per_run {
        for (acc, &(l, c, s)) in sums.iter_mut().zip(row) {
            acc.0 += l;
            acc.1 += c;
            acc.2 += s;
        }
    }
    let r = runs as f64;
    Ok(fractions
        .iter()
        .zip(sums)
        .map(|(&fraction, (l, c, s))| ProfileRow {
            fraction,
            mean_largest: l as f64 / r,
            mean_count: c as f64 / r,
            mean_singletons: s as f64 / r,
            runs,
        })
        .collect())
}
