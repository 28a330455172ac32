//! Privacy leakage of honest nodes, in nats.
//!
//! Once the adversary learns the input sum of an honest component of size
//! `m`, it learns `I(S_i; Σ)` about each member's input. For Gaussian inputs
//! that is `½ ln(m / (m-1))`, ≈ `1 / (2(m-1))` for large `m`. The KSG
//! estimator measures the same quantity for arbitrary input distributions.

use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::digamma;

use crate::adversary::HonestPartition;
use crate::error::{invalid, Result};
use crate::seed::rng_from_seed;

/// Leakage about one node's private value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Leakage {
    /// The component is the node itself, so its value is revealed exactly.
    FullDisclosure,
    Nats(f64),
}

impl Leakage {
    /// Nats, with full disclosure as `+inf`.
    pub fn nats(&self) -> f64 {
        match *self {
            Leakage::FullDisclosure => f64::INFINITY,
            Leakage::Nats(v) => v,
        }
    }

    pub fn is_full_disclosure(&self) -> bool {
        matches!(self, Leakage::FullDisclosure)
    }
}

/// `½ ln(m / (m-1))`; full disclosure at `m = 1`.
pub fn analytic_mi_exact(m: usize) -> Result<Leakage> {
    match m {
        0 => invalid("component size must be at least 1"),
        1 => Ok(Leakage::FullDisclosure),
        _ => {
            let m = m as f64;
            // ln(m/(m-1)) = -ln(1 - 1/m), with ln_1p keeping precision at large m.
            Ok(Leakage::Nats(-0.5 * (-1.0 / m).ln_1p()))
        }
    }
}

/// `1 / (2(m-1))`
pub fn analytic_mi_asymptotic(m: usize) -> Result<f64> {
    if m < 2 {
        return invalid(format!("asymptotic form needs m >= 2, got {m}"));
    }
    Ok(0.5 / (m - 1) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MiMethod {
    AnalyticExact,
    AnalyticAsymptotic,
    Ksg,
}

impl MiMethod {
    pub fn name(&self) -> &'static str {
        match self {
            MiMethod::AnalyticExact => "analytic_exact",
            MiMethod::AnalyticAsymptotic => "analytic_asymptotic",
            MiMethod::Ksg => "ksg",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MiEstimate {
    pub value: f64,
    pub method: MiMethod,
    pub sample_count: usize,
    pub k_neighbors: Option<usize>,
    /// Spread of the per-sample digamma terms over `sqrt(N)`.
    pub std_error: Option<f64>,
}

pub const DEFAULT_K: usize = 3;
pub const MIN_KSG_SAMPLES: usize = 50;
const JITTER: f64 = 1e-10;
const JITTER_SEED: u64 = 0x6b73_675f_6a69_7474;

/// KSG estimator (algorithm 1) for scalar samples.
pub fn ksg_mi(x: &[f64], y: &[f64], k: usize) -> Result<MiEstimate> {
    ksg_flat(x, 1, y, 1, k)
}

/// KSG estimator for vector-valued samples, max-norm in every space.
pub fn ksg_mi_vectors(x: &[Vec<f64>], y: &[Vec<f64>], k: usize) -> Result<MiEstimate> {
    let dx = x.first().map_or(0, Vec::len);
    let dy = y.first().map_or(0, Vec::len);
    if dx == 0 || dy == 0 || x.iter().any(|v| v.len() != dx) || y.iter().any(|v| v.len() != dy) {
        return invalid("samples must be non-empty vectors of a consistent dimension");
    }
    ksg_flat(&x.concat(), dx, &y.concat(), dy, k)
}

fn ksg_flat(x: &[f64], dx: usize, y: &[f64], dy: usize, k: usize) -> Result<MiEstimate> {
    let n = x.len() / dx;
    if y.len() / dy != n {
        return invalid(format!("sample count mismatch: {} vs {}", n, y.len() / dy));
    }
    if n < MIN_KSG_SAMPLES {
        return invalid(format!("KSG needs at least {MIN_KSG_SAMPLES} samples, got {n}"));
    }
    if k == 0 || k >= n {
        return invalid(format!("k must be in 1..{n}, got {k}"));
    }

    // Break exact ties once, deterministically.
    let mut rng = rng_from_seed(JITTER_SEED);
    let jitter = Uniform::new(-JITTER, JITTER).expect("valid range");
    let xs: Vec<f64> = x.iter().map(|v| v + jitter.sample(&mut rng)).collect();
    let ys: Vec<f64> = y.iter().map(|v| v + jitter.sample(&mut rng)).collect();

    let d = dx + dy;
    let mut joint = Vec::with_capacity(n * d);
    for i in 0..n {
        joint.extend_from_slice(&xs[i * dx..(i + 1) * dx]);
        joint.extend_from_slice(&ys[i * dy..(i + 1) * dy]);
    }
    let joint = SlabIndex::new(joint, d);
    let xi = SlabIndex::new(xs, dx);
    let yi = SlabIndex::new(ys, dy);

    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for i in 0..n {
        let eps = joint.kth_distance(i, k);
        let nx = xi.count_within(i, eps);
        let ny = yi.count_within(i, eps);
        let t = digamma((nx + 1) as f64) + digamma((ny + 1) as f64);
        sum += t;
        sum_sq += t * t;
    }
    let nf = n as f64;
    let mean = sum / nf;
    let var = (sum_sq / nf - mean * mean).max(0.0);
    Ok(MiEstimate {
        value: digamma(k as f64) + digamma(nf) - mean,
        method: MiMethod::Ksg,
        sample_count: n,
        k_neighbors: Some(k),
        std_error: Some((var / nf).sqrt()),
    })
}

/// Points sorted along their first coordinate. Max-norm neighbours of a
/// point lie inside a slab around it on that axis, so searches scan outward
/// from the point and stop at the slab edge.
struct SlabIndex {
    dim: usize,
    data: Vec<f64>,
    order: Vec<usize>,
    keys: Vec<f64>,
    rank: Vec<usize>,
}

impl SlabIndex {
    fn new(data: Vec<f64>, dim: usize) -> Self {
        let n = data.len() / dim;
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| data[a * dim].total_cmp(&data[b * dim]));
        let keys = order.iter().map(|&i| data[i * dim]).collect();
        let mut rank = vec![0; n];
        for (r, &i) in order.iter().enumerate() {
            rank[i] = r;
        }
        SlabIndex {
            dim,
            data,
            order,
            keys,
            rank,
        }
    }

    #[inline]
    fn point(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    #[inline]
    fn dist(&self, a: usize, b: usize) -> f64 {
        self.point(a)
            .iter()
            .zip(self.point(b))
            .map(|(p, q)| (p - q).abs())
            .fold(0.0, f64::max)
    }

    /// Distance from point `i` to its `k`-th nearest other point.
    fn kth_distance(&self, i: usize, k: usize) -> f64 {
        let n = self.order.len();
        let center = self.keys[self.rank[i]];
        // Ascending list of the k best distances so far.
        let mut best: Vec<f64> = Vec::with_capacity(k + 1);
        let bound = |best: &Vec<f64>| {
            if best.len() < k {
                f64::INFINITY
            } else {
                best[k - 1]
            }
        };
        let consider = |j: usize, best: &mut Vec<f64>| {
            let d = self.dist(i, j);
            if best.len() < k || d < best[k - 1] {
                let pos = best.partition_point(|&b| b <= d);
                best.insert(pos, d);
                best.truncate(k);
            }
        };
        let r = self.rank[i];
        let (mut lo, mut hi) = (r, r + 1);
        loop {
            let limit = bound(&best);
            let left_open = lo > 0 && center - self.keys[lo - 1] < limit;
            let right_open = hi < n && self.keys[hi] - center < limit;
            if !left_open && !right_open {
                break;
            }
            // Expand toward the nearer slab side first.
            let go_left = match (left_open, right_open) {
                (true, true) => center - self.keys[lo - 1] <= self.keys[hi] - center,
                (l, _) => l,
            };
            if go_left {
                lo -= 1;
                consider(self.order[lo], &mut best);
            } else {
                consider(self.order[hi], &mut best);
                hi += 1;
            }
        }
        bound(&best)
    }

    /// Number of other points strictly closer than `eps` to point `i`.
    fn count_within(&self, i: usize, eps: f64) -> usize {
        if eps <= 0.0 {
            return 0;
        }
        let center = self.keys[self.rank[i]];
        let lo = self.keys.partition_point(|&v| v <= center - eps);
        let hi = self.keys.partition_point(|&v| v < center + eps);
        if self.dim == 1 {
            // Every point in the open interval qualifies, including `i`.
            return hi - lo - 1;
        }
        self.order[lo..hi]
            .iter()
            .filter(|&&j| j != i && self.dist(i, j) < eps)
            .count()
    }
}

/// Distribution of the scalar private values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum PrivateDataModel {
    Gaussian { mean: f64, variance: f64 },
    Uniform { lo: f64, hi: f64 },
}

impl PrivateDataModel {
    pub fn standard_gaussian() -> Self {
        PrivateDataModel::Gaussian {
            mean: 0.0,
            variance: 1.0,
        }
    }

    pub fn unit_uniform() -> Self {
        PrivateDataModel::Uniform { lo: 0.0, hi: 1.0 }
    }

    pub fn name(&self) -> &'static str {
        match self {
            PrivateDataModel::Gaussian { .. } => "gaussian",
            PrivateDataModel::Uniform { .. } => "uniform",
        }
    }

    fn sampler(&self) -> Result<Sampler> {
        match *self {
            PrivateDataModel::Gaussian { mean, variance } if variance > 0.0 => Ok(Sampler::Gaussian(
                Normal::new(mean, variance.sqrt()).map_err(|e| crate::Error::InvalidParameter(e.to_string()))?,
            )),
            PrivateDataModel::Uniform { lo, hi } if lo < hi => Ok(Sampler::Uniform(
                Uniform::new(lo, hi).map_err(|e| crate::Error::InvalidParameter(e.to_string()))?,
            )),
            other => invalid(format!("degenerate private data model {other:?}")),
        }
    }
}

enum Sampler {
    Gaussian(Normal<f64>),
    Uniform(Uniform<f64>),
}

impl Sampler {
    fn draw<R: Rng>(&self, rng: &mut R) -> f64 {
        match self {
            Sampler::Gaussian(d) => d.sample(rng),
            Sampler::Uniform(d) => d.sample(rng),
        }
    }
}

/// Estimates `I(S_1; S_1 + ... + S_m)` from `runs` i.i.d. draws.
pub fn simulate_component_mi(
    model: &PrivateDataModel,
    m: usize,
    runs: usize,
    k: usize,
    seed: u64,
) -> Result<MiEstimate> {
    if m < 2 {
        return invalid(format!("component size must be at least 2, got {m}"));
    }
    if runs < 1000 {
        return invalid(format!("need at least 1000 runs, got {runs}"));
    }
    let sampler = model.sampler()?;
    let mut rng = rng_from_seed(seed);
    let mut own = Vec::with_capacity(runs);
    let mut sums = Vec::with_capacity(runs);
    for _ in 0..runs {
        let first = sampler.draw(&mut rng);
        let rest: f64 = (1..m).map(|_| sampler.draw(&mut rng)).sum();
        own.push(first);
        sums.push(first + rest);
    }
    ksg_mi(&own, &sums, k)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeLeakage {
    pub node: usize,
    pub component_size: usize,
    pub leakage: Leakage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrivacyLossReport {
    /// Honest nodes alone in their component.
    pub fully_revealed: usize,
    /// Mean exact leakage over honest nodes in components of size >= 2.
    pub mean_mi: Option<f64>,
    /// One entry per honest node, ascending id.
    pub per_node: Vec<NodeLeakage>,
}

/// Per-node leakage from each honest node's own component size.
pub fn network_privacy_loss(p: &HonestPartition) -> PrivacyLossReport {
    let mut per_node = Vec::with_capacity(p.honest_count());
    for comp in &p.components {
        let leakage = analytic_mi_exact(comp.len()).expect("components are non-empty");
        per_node.extend(comp.iter().map(|&node| NodeLeakage {
            node,
            component_size: comp.len(),
            leakage,
        }));
    }
    per_node.sort_by_key(|l| l.node);
    let fully_revealed = per_node.iter().filter(|l| l.leakage.is_full_disclosure()).count();
    let finite: Vec<f64> = per_node
        .iter()
        .filter_map(|l| match l.leakage {
            Leakage::Nats(v) => Some(v),
            Leakage::FullDisclosure => None,
        })
        .collect();
    let mean_mi = (!finite.is_empty()).then(|| finite.iter().sum::<f64>() / finite.len() as f64);
    PrivacyLossReport {
        fully_revealed,
        mean_mi,
        per_node,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adversary::honest_partition;
    use crate::graph::Graph;

    #[test]
    fn exact_values() {
        assert!((analytic_mi_exact(2).unwrap().nats() - 0.5 * 2f64.ln()).abs() < 1e-15);
        assert!((analytic_mi_exact(2).unwrap().nats() - 0.34657).abs() < 1e-5);
        assert!((analytic_mi_exact(11).unwrap().nats() - 0.047655).abs() < 1e-6);
        assert_eq!(analytic_mi_exact(1).unwrap(), Leakage::FullDisclosure);
        assert!(analytic_mi_exact(0).is_err());
    }

    #[test]
    fn asymptotic_values() {
        assert_eq!(analytic_mi_asymptotic(2).unwrap(), 0.5);
        assert!((analytic_mi_asymptotic(11).unwrap() - 0.05).abs() < 1e-15);
        assert!(analytic_mi_asymptotic(1).is_err());
        let exact = analytic_mi_exact(51).unwrap().nats();
        let asym = analytic_mi_asymptotic(51).unwrap();
        assert!((exact - asym).abs() / asym < 0.01);
    }

    #[test]
    fn slab_index_matches_brute_force() {
        let mut rng = rng_from_seed(3);
        let dim = 2;
        let data: Vec<f64> = (0..400).map(|_| rng.random_range(-1.0..1.0)).collect();
        let idx = SlabIndex::new(data.clone(), dim);
        let n = 200;
        for i in (0..n).step_by(7) {
            let mut d: Vec<f64> = (0..n)
                .filter(|&j| j != i)
                .map(|j| {
                    (0..dim)
                        .map(|c| (data[i * dim + c] - data[j * dim + c]).abs())
                        .fold(0.0, f64::max)
                })
                .collect();
            d.sort_by(f64::total_cmp);
            for k in [1, 3, 5] {
                assert_eq!(idx.kth_distance(i, k), d[k - 1]);
                let eps = d[k - 1];
                assert_eq!(idx.count_within(i, eps), d.iter().filter(|&&v| v < eps).count());
            }
        }
    }

    #[test]
    fn ksg_independent_is_near_zero() {
        let mut rng = rng_from_seed(11);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let x: Vec<f64> = (0..5000).map(|_| normal.sample(&mut rng)).collect();
        let y: Vec<f64> = (0..5000).map(|_| normal.sample(&mut rng)).collect();
        let est = ksg_mi(&x, &y, 3).unwrap();
        assert!(est.value.abs() <= 0.02, "{}", est.value);
    }

    #[test]
    fn ksg_identity_is_large() {
        let mut rng = rng_from_seed(12);
        let x: Vec<f64> = (0..2000).map(|_| rng.random::<f64>()).collect();
        let est = ksg_mi(&x, &x, 3).unwrap();
        assert!(est.value > 2.0, "{}", est.value);
    }

    #[test]
    fn ksg_handles_heavy_duplicates() {
        let x: Vec<f64> = (0..500).map(|i| (i % 5) as f64).collect();
        let y: Vec<f64> = (0..500).map(|i| (i % 7) as f64).collect();
        let est = ksg_mi(&x, &y, 3).unwrap();
        assert!(est.value.is_finite());
    }

    #[test]
    fn ksg_argument_errors() {
        let x = vec![0.0; 100];
        assert!(ksg_mi(&x, &x[..99], 3).is_err());
        assert!(ksg_mi(&x[..10], &x[..10], 3).is_err());
        assert!(ksg_mi(&x, &x, 0).is_err());
    }

    #[test]
    fn data_model_validation() {
        let bad = PrivateDataModel::Gaussian {
            mean: 0.0,
            variance: 0.0,
        };
        assert!(simulate_component_mi(&bad, 2, 1000, 3, 0).is_err());
        let bad = PrivateDataModel::Uniform { lo: 1.0, hi: 1.0 };
        assert!(simulate_component_mi(&bad, 2, 1000, 3, 0).is_err());
        let ok = PrivateDataModel::unit_uniform();
        assert!(simulate_component_mi(&ok, 1, 1000, 3, 0).is_err());
        assert!(simulate_component_mi(&ok, 2, 999, 3, 0).is_err());
    }

    #[test]
    fn network_loss_examples() {
        let r = network_privacy_loss(&honest_partition(&Graph::path(5), &[2]).unwrap());
        assert_eq!(r.fully_revealed, 0);
        assert!((r.mean_mi.unwrap() - 0.34657).abs() < 1e-5);
        assert_eq!(r.per_node.iter().map(|l| l.node).collect::<Vec<_>>(), vec![0, 1, 3, 4]);

        let r = network_privacy_loss(&honest_partition(&Graph::star(9), &[0]).unwrap());
        assert_eq!(r.fully_revealed, 9);
        assert_eq!(r.mean_mi, None);

        let r = network_privacy_loss(&honest_partition(&Graph::cycle(50), &[]).unwrap());
        assert!((r.mean_mi.unwrap() - 0.010101).abs() < 1e-6);

        let r = network_privacy_loss(&honest_partition(&Graph::cycle(3), &[0, 1, 2]).unwrap());
        assert_eq!((r.fully_revealed, r.mean_mi, r.per_node.len()), (0, None, 0));
    }
}
