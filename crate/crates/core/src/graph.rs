//! Undirected simple graphs: generation, decomposition and edge-list I/O.
//!
//! Nodes are the ids `0..n`. Edges are stored once as `(i, j)` with `i < j`,
//! sorted, alongside sorted per-node adjacency lists.

use std::collections::HashSet;
use std::fmt::Write as _;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::{index, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::seed::{child_seed, rng_from_seed};

/// Attempts made by [`resample_connected`] before giving up.
pub const CONNECTED_RESAMPLE_ATTEMPTS: usize = 100;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    n: usize,
    edges: Vec<(usize, usize)>,
    adjacency: Vec<Vec<usize>>,
}

/// Node degrees, one per node.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DegreeSequence(pub Vec<usize>);

impl DegreeSequence {
    pub fn total(&self) -> usize {
        self.0.iter().sum()
    }

    pub fn max(&self) -> usize {
        self.0.iter().copied().max().unwrap_or(0)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl Graph {
    /// Builds a graph, rejecting self-loops, repeated pairs and out-of-range ids.
    /// Pairs may be given in either orientation.
    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut seen = HashSet::new();
        let mut list = Vec::new();
        for (a, b) in edges {
            if a >= n || b >= n {
                return invalid(format!("edge ({a}, {b}) out of range for n={n}"));
            }
            if a == b {
                return invalid(format!("self-loop at node {a}"));
            }
            let e = (a.min(b), a.max(b));
            if !seen.insert(e) {
                return invalid(format!("duplicate edge ({}, {})", e.0, e.1));
            }
            list.push(e);
        }
        Ok(Self::from_unique_edges(n, list))
    }

    fn from_unique_edges(n: usize, mut edges: Vec<(usize, usize)>) -> Self {
        edges.sort_unstable();
        let mut adjacency = vec![Vec::new(); n];
        for &(i, j) in &edges {
            adjacency[i].push(j);
            adjacency[j].push(i);
        }
        for nb in &mut adjacency {
            nb.sort_unstable();
        }
        Graph { n, edges, adjacency }
    }

    pub fn empty(n: usize) -> Self {
        Self::from_unique_edges(n, Vec::new())
    }

    pub fn complete(n: usize) -> Self {
        let edges = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
        Self::from_unique_edges(n, edges)
    }

    pub fn path(n: usize) -> Self {
        Self::from_unique_edges(n, (1..n).map(|i| (i - 1, i)).collect())
    }

    pub fn cycle(n: usize) -> Self {
        let mut edges: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
        if n > 2 {
            edges.push((0, n - 1));
        }
        Self::from_unique_edges(n, edges)
    }

    /// Star with hub 0 and `leaves` leaves.
    pub fn star(leaves: usize) -> Self {
        Self::from_unique_edges(leaves + 1, (1..=leaves).map(|j| (0, j)).collect())
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.adjacency[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.adjacency[i].len()
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        i < self.n && self.adjacency[i].binary_search(&j).is_ok()
    }

    pub fn degree_sequence(&self) -> DegreeSequence {
        DegreeSequence(self.adjacency.iter().map(Vec::len).collect())
    }

    pub fn is_connected(&self) -> bool {
        self.n <= 1 || connected_components(self).len() == 1
    }
}

/// Uniform random simple graph with exactly `m` edges (the G(n, m) model).
pub fn generate_poisson(n: usize, m: usize, seed: u64) -> Result<Graph> {
    if n < 2 {
        return invalid(format!("n must be at least 2, got {n}"));
    }
    let pairs = n * (n - 1) / 2;
    if m > pairs {
        return invalid(format!("m={m} exceeds the {pairs} possible edges on {n} nodes"));
    }
    let mut rng = rng_from_seed(seed);
    let edges = index::sample(&mut rng, pairs, m)
        .into_iter()
        .map(|k| pair_from_index(n, k))
        .collect();
    Ok(Graph::from_unique_edges(n, edges))
}

/// Maps a linear index in `0..n(n-1)/2` to the pair `(i, j)`, `i < j`, in row order.
fn pair_from_index(n: usize, mut k: usize) -> (usize, usize) {
    let mut i = 0;
    loop {
        let row = n - 1 - i;
        if k < row {
            return (i, i + 1 + k);
        }
        k -= row;
        i += 1;
    }
}

/// Power-law graph with exactly `m` edges, via an erased configuration model.
///
/// Target degrees are drawn i.i.d. from `P(d) ∝ d^-gamma` on `1..=n-1`,
/// rescaled so they total `2m`, capped at `n - 1` and nudged to the exact
/// total. Stubs are paired uniformly; self-loops and multi-edges are erased.
/// Lost stubs are re-paired among themselves for a few passes, and any
/// remaining shortfall is filled with uniformly random non-edges.
pub fn generate_power_law(n: usize, m: usize, gamma: f64, seed: u64) -> Result<Graph> {
    if n < 2 {
        return invalid(format!("n must be at least 2, got {n}"));
    }
    if !(gamma > 1.0) || !gamma.is_finite() {
        return invalid(format!("gamma must be a finite value > 1, got {gamma}"));
    }
    let pairs = n * (n - 1) / 2;
    if m > pairs {
        return invalid(format!("m={m} exceeds the {pairs} possible edges on {n} nodes"));
    }
    const ATTEMPTS: usize = 20;
    let mut last_reason = String::new();
    for attempt in 0..ATTEMPTS {
        let mut rng = rng_from_seed(child_seed(seed, attempt as u64));
        match power_law_attempt(n, m, gamma, &mut rng) {
            Ok(g) => return Ok(g),
            Err(reason) => last_reason = reason,
        }
    }
    Err(Error::GenerationFailed {
        attempts: ATTEMPTS,
        reason: last_reason,
    })
}

fn power_law_attempt<R: Rng>(n: usize, m: usize, gamma: f64, rng: &mut R) -> std::result::Result<Graph, String> {
    let target = power_law_degrees(n, m, gamma, rng)?;

    let mut stubs: Vec<usize> = target
        .iter()
        .enumerate()
        .flat_map(|(i, &d)| std::iter::repeat_n(i, d))
        .collect();
    stubs.shuffle(rng);

    let mut present: HashSet<(usize, usize)> = HashSet::with_capacity(m);
    let mut degree = vec![0usize; n];
    for pair in stubs.chunks_exact(2) {
        add_simple_edge(pair[0], pair[1], &mut present, &mut degree);
    }

    // Re-pair stubs lost to erasure.
    for _ in 0..8 {
        if present.len() >= m {
            break;
        }
        let mut residual: Vec<usize> = Vec::new();
        for i in 0..n {
            residual.extend(std::iter::repeat_n(i, target[i].saturating_sub(degree[i])));
        }
        if residual.len() < 2 {
            break;
        }
        residual.shuffle(rng);
        let before = present.len();
        for pair in residual.chunks_exact(2) {
            if present.len() >= m {
                break;
            }
            add_simple_edge(pair[0], pair[1], &mut present, &mut degree);
        }
        if present.len() == before {
            break;
        }
    }

    fill_random_edges(n, m, &mut present, rng);
    if present.len() != m {
        return Err(format!("realized {} edges instead of {m}", present.len()));
    }
    Ok(Graph::from_unique_edges(n, present.into_iter().collect()))
}

fn add_simple_edge(a: usize, b: usize, present: &mut HashSet<(usize, usize)>, degree: &mut [usize]) -> bool {
    if a == b || !present.insert((a.min(b), a.max(b))) {
        return false;
    }
    degree[a] += 1;
    degree[b] += 1;
    true
}

/// Truncated power-law degree targets rescaled to total exactly `2m`.
fn power_law_degrees<R: Rng>(n: usize, m: usize, gamma: f64, rng: &mut R) -> std::result::Result<Vec<usize>, String> {
    let cap = n - 1;
    let weights: Vec<f64> = (1..=cap).map(|d| (d as f64).powf(-gamma)).collect();
    let dist = WeightedIndex::new(&weights).map_err(|e| e.to_string())?;
    let raw: Vec<usize> = (0..n).map(|_| dist.sample(rng) + 1).collect();
    let raw_total: usize = raw.iter().sum();
    let total = 2 * m;
    let scale = total as f64 / raw_total as f64;
    let mut degrees: Vec<usize> = raw
        .iter()
        .map(|&d| ((d as f64 * scale).round() as usize).min(cap))
        .collect();

    let mut sum: usize = degrees.iter().sum();
    let mut guard = 0usize;
    while sum != total {
        guard += 1;
        if guard > 100 * (total + n) {
            return Err("could not adjust degree sequence to the target total".into());
        }
        let i = rng.random_range(0..n);
        if sum < total && degrees[i] < cap {
            degrees[i] += 1;
            sum += 1;
        } else if sum > total && degrees[i] > 0 {
            degrees[i] -= 1;
            sum -= 1;
        }
    }
    Ok(degrees)
}

/// Adds uniformly random non-edges until `present` holds `m` edges.
fn fill_random_edges<R: Rng>(n: usize, m: usize, present: &mut HashSet<(usize, usize)>, rng: &mut R) {
    let pairs = n * (n - 1) / 2;
    let missing = m.saturating_sub(present.len());
    if missing == 0 {
        return;
    }
    if 2 * m <= pairs {
        while present.len() < m {
            let a = rng.random_range(0..n);
            let b = rng.random_range(0..n);
            if a != b {
                present.insert((a.min(b), a.max(b)));
            }
        }
    } else {
        let mut free: Vec<(usize, usize)> = (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .filter(|e| !present.contains(e))
            .collect();
        free.shuffle(rng);
        present.extend(free.into_iter().take(missing));
    }
}

/// Draws graphs with successive derived seeds until one is connected.
pub fn resample_connected<F>(seed: u64, mut generate: F) -> Result<Graph>
where
    F: FnMut(u64) -> Result<Graph>,
{
    for attempt in 0..CONNECTED_RESAMPLE_ATTEMPTS {
        let s = if attempt == 0 {
            seed
        } else {
            child_seed(seed, 1000 + attempt as u64)
        };
        let g = generate(s)?;
        if g.is_connected() {
            return Ok(g);
        }
    }
    Err(Error::GenerationFailed {
        attempts: CONNECTED_RESAMPLE_ATTEMPTS,
        reason: "no connected graph drawn".into(),
    })
}

/// Random topology families compared in the experiments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Topology {
    Poisson,
    PowerLaw { gamma: f64 },
}

impl Topology {
    pub const DEFAULT_GAMMA: f64 = 2.5;

    pub fn generate(&self, n: usize, m: usize, seed: u64) -> Result<Graph> {
        match *self {
            Topology::Poisson => generate_poisson(n, m, seed),
            Topology::PowerLaw { gamma } => generate_power_law(n, m, gamma, seed),
        }
    }

    pub fn generate_connected(&self, n: usize, m: usize, seed: u64) -> Result<Graph> {
        resample_connected(seed, |s| self.generate(n, m, s))
    }

    pub fn name(&self) -> &'static str {
        match self {
            Topology::Poisson => "poisson",
            Topology::PowerLaw { .. } => "power_law",
        }
    }
}

/// Maximal connected node sets, each sorted, ordered by smallest member.
pub fn connected_components(g: &Graph) -> Vec<Vec<usize>> {
    let mut label = vec![usize::MAX; g.n];
    let mut components = Vec::new();
    let mut stack = Vec::new();
    for start in 0..g.n {
        if label[start] != usize::MAX {
            continue;
        }
        let id = components.len();
        let mut members = vec![start];
        label[start] = id;
        stack.push(start);
        while let Some(u) = stack.pop() {
            for &v in &g.adjacency[u] {
                if label[v] == usize::MAX {
                    label[v] = id;
                    members.push(v);
                    stack.push(v);
                }
            }
        }
        members.sort_unstable();
        components.push(members);
    }
    components
}

/// Subgraph induced by a node subset, with ids renumbered in ascending order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InducedSubgraph {
    pub graph: Graph,
    /// `old_to_new[v]` is the new id of original node `v`, if kept.
    pub old_to_new: Vec<Option<usize>>,
    /// `new_to_old[k]` is the original id of new node `k`.
    pub new_to_old: Vec<usize>,
}

pub fn induced_subgraph(g: &Graph, keep: &[usize]) -> Result<InducedSubgraph> {
    let mut old_to_new = vec![None; g.n];
    let mut sorted: Vec<usize> = keep.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    for (new, &old) in sorted.iter().enumerate() {
        if old >= g.n {
            return invalid(format!("node {old} out of range for n={}", g.n));
        }
        old_to_new[old] = Some(new);
    }
    let edges = g
        .edges
        .iter()
        .filter_map(|&(a, b)| Some((old_to_new[a]?, old_to_new[b]?)))
        .collect();
    Ok(InducedSubgraph {
        graph: Graph::from_unique_edges(sorted.len(), edges),
        old_to_new,
        new_to_old: sorted,
    })
}

pub fn is_connected(g: &Graph) -> bool {
    g.is_connected()
}

pub fn degree_sequence(g: &Graph) -> DegreeSequence {
    g.degree_sequence()
}

/// Parses the edge-list format: an optional `# n=<count>` header, then one
/// `i j` pair per line. Blank lines and other `#` lines are ignored.
pub fn read_edge_list(text: &str) -> Result<Graph> {
    let mut declared: Option<usize> = None;
    let mut edges = Vec::new();
    let mut seen = HashSet::new();
    let mut max_id: Option<usize> = None;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            if let Some(count) = rest.trim().strip_prefix("n=") {
                let n = count.trim().parse::<usize>().map_err(|e| Error::Parse {
                    line: line_no,
                    message: format!("bad node count: {e}"),
                })?;
                declared = Some(n);
            }
            continue;
        }
        let parse_err = |message: String| Error::Parse { line: line_no, message };
        let mut fields = line.split_whitespace();
        let (Some(a), Some(b), None) = (fields.next(), fields.next(), fields.next()) else {
            return Err(parse_err(format!("expected two node ids, got {line:?}")));
        };
        let a: usize = a.parse().map_err(|e| parse_err(format!("bad node id {a:?}: {e}")))?;
        let b: usize = b.parse().map_err(|e| parse_err(format!("bad node id {b:?}: {e}")))?;
        if a == b {
            return Err(parse_err(format!("self-loop at node {a}")));
        }
        let e = (a.min(b), a.max(b));
        if !seen.insert(e) {
            return Err(parse_err(format!("duplicate edge {} {}", e.0, e.1)));
        }
        max_id = Some(max_id.map_or(e.1, |m: usize| m.max(e.1)));
        edges.push(e);
    }
    let needed = max_id.map_or(0, |m| m + 1);
    let n = match declared {
        Some(n) if n < needed => {
            return Err(Error::Parse {
                line: 1,
                message: format!("declared n={n} but edges reference node {}", needed - 1),
            })
        }
        Some(n) => n,
        None => needed,
    };
    Ok(Graph::from_unique_edges(n, edges))
}

/// Writes the edge-list format, always with the `# n=` header.
pub fn write_edge_list(g: &Graph) -> String {
    let mut out = String::with_capacity(16 + 12 * g.edges.len());
    let _ = writeln!(out, "# n={}", g.n);
    for &(i, j) in &g.edges {
        let _ = writeln!(out, "{i} {j}");
    }
    out
}
