//! Flat `key = value` experiment configuration.
//!
//! Blank lines and `#` comments are ignored. Lists are comma separated and
//! integer lists accept inclusive ranges (`2..=50`). Every key not listed
//! for the chosen experiment is rejected.
//!
//! Common keys: `experiment`, `master_seed` (required unless given on the
//! command line), `workers`, `out_dir`.
//!
//! | experiment          | keys (default)                                                        |
//! |---------------------|-----------------------------------------------------------------------|
//! | `mi_curve`          | `m_values` (2..=50), `samples` (5000), `k` (3), `runs` (1),            |
//! |                     | `distributions` (gaussian,uniform)                                    |
//! | `topology_attack`   | `n` (10), `m` (15), `gamma` (2.5), `topologies` (poisson,power_law),   |
//! |                     | `corruption` (degree_targeted), `adaptive` (false),                    |
//! |                     | `fractions` (0,0.1,...,0.9), `runs` (200), `membership` (true),        |
//! |                     | `samples_per_node` (1), `nonmembers_per_node` (1), `hidden` (32),      |
//! |                     | `classes` (4), `fl_rounds` (3), `step_size` (0.5),                     |
//! |                     | `round_policy` (average or single:R), `consensus_tol` (1e-8),          |
//! |                     | `connected` (true)                                                    |
//! | `inversion_quality` | `n` (50), `m` (100), `mk_values` (1,2,4), `trials` (20),               |
//! |                     | `iters` (2000), `lr` (0.1), `restarts` (5), `hidden` (32),             |
//! |                     | `classes` (4), `labels_known` (true), `duplicate_labels` (true),       |
//! |                     | `image_pairs` (2)                                                     |
//! | `consensus_check`   | `n` (50), `m` (150), `gamma` (2.5), `topologies` (poisson,power_law),  |
//! |                     | `runs` (100), `tol` (1e-8), `max_rounds` (100000),                     |
//! |                     | `stop` (true_mean or successive_difference), `include_complete` (true) |

use std::collections::BTreeMap;
use std::fmt::Display;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::attack::image::PATTERN_COUNT;
use crate::attack::RoundPolicy;
use crate::consensus::StopRule;
use crate::error::{Error, Result};
use crate::graph::Topology;
use crate::privacy::PrivateDataModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    MiCurve,
    TopologyAttack,
    InversionQuality,
    ConsensusCheck,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 4] = [
        ExperimentKind::MiCurve,
        ExperimentKind::TopologyAttack,
        ExperimentKind::InversionQuality,
        ExperimentKind::ConsensusCheck,
    ];

    pub fn id(&self) -> &'static str {
        match self {
            ExperimentKind::MiCurve => "mi_curve",
            ExperimentKind::TopologyAttack => "topology_attack",
            ExperimentKind::InversionQuality => "inversion_quality",
            ExperimentKind::ConsensusCheck => "consensus_check",
        }
    }

    pub fn from_id(id: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.id() == id)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MiCurveParams {
    pub m_values: Vec<usize>,
    pub samples: usize,
    pub k: usize,
    pub runs: usize,
    pub distributions: Vec<PrivateDataModel>,
}

impl Default for MiCurveParams {
    fn default() -> Self {
        MiCurveParams {
            m_values: (2..=50).collect(),
            samples: 5000,
            k: 3,
            runs: 1,
            distributions: vec![PrivateDataModel::standard_gaussian(), PrivateDataModel::unit_uniform()],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorruptionKind {
    DegreeTargeted,
    UniformRandom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopologyAttackParams {
    pub n: usize,
    pub m: usize,
    pub gamma: f64,
    pub topologies: Vec<Topology>,
    pub corruption: CorruptionKind,
    pub adaptive: bool,
    pub fractions: Vec<f64>,
    pub runs: usize,
    pub membership: bool,
    pub samples_per_node: usize,
    pub nonmembers_per_node: usize,
    pub hidden: usize,
    pub classes: usize,
    pub fl_rounds: usize,
    pub step_size: f64,
    pub round_policy: RoundPolicy,
    pub consensus_tol: f64,
    pub connected: bool,
}

impl Default for TopologyAttackParams {
    fn default() -> Self {
        TopologyAttackParams {
            n: 10,
            m: 15,
            gamma: Topology::DEFAULT_GAMMA,
            topologies: default_topologies(Topology::DEFAULT_GAMMA),
            corruption: CorruptionKind::DegreeTargeted,
            adaptive: false,
            fractions: (0..10).map(|i| i as f64 / 10.0).collect(),
            runs: 200,
            membership: true,
            samples_per_node: 1,
            nonmembers_per_node: 1,
            hidden: 32,
            classes: 4,
            fl_rounds: 3,
            step_size: 0.5,
            round_policy: RoundPolicy::Average,
            consensus_tol: 1e-8,
            connected: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InversionParams {
    pub n: usize,
    pub m: usize,
    pub mk_values: Vec<usize>,
    pub trials: usize,
    pub iters: usize,
    pub lr: f64,
    pub restarts: usize,
    pub hidden: usize,
    pub classes: usize,
    pub labels_known: bool,
    pub duplicate_labels: bool,
    pub image_pairs: usize,
}

impl Default for InversionParams {
    fn default() -> Self {
        InversionParams {
            n: 50,
            m: 100,
            mk_values: vec![1, 2, 4],
            trials: 20,
            iters: 2000,
            lr: 0.1,
            restarts: 5,
            hidden: 32,
            classes: 4,
            labels_known: true,
            duplicate_labels: true,
            image_pairs: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsensusCheckParams {
    pub n: usize,
    pub m: usize,
    pub gamma: f64,
    pub topologies: Vec<Topology>,
    pub runs: usize,
    pub tol: f64,
    pub max_rounds: usize,
    pub stop: StopRule,
    pub include_complete: bool,
}

impl Default for ConsensusCheckParams {
    fn default() -> Self {
        ConsensusCheckParams {
            n: 50,
            m: 150,
            gamma: Topology::DEFAULT_GAMMA,
            topologies: default_topologies(Topology::DEFAULT_GAMMA),
            runs: 100,
            tol: 1e-8,
            max_rounds: 100_000,
            stop: StopRule::TrueMean,
            include_complete: true,
        }
    }
}

fn default_topologies(gamma: f64) -> Vec<Topology> {
    vec![Topology::Poisson, Topology::PowerLaw { gamma }]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "experiment")]
pub enum ExperimentParams {
    MiCurve(MiCurveParams),
    TopologyAttack(TopologyAttackParams),
    InversionQuality(InversionParams),
    ConsensusCheck(ConsensusCheckParams),
}

impl ExperimentParams {
    pub fn kind(&self) -> ExperimentKind {
        match self {
            ExperimentParams::MiCurve(_) => ExperimentKind::MiCurve,
            ExperimentParams::TopologyAttack(_) => ExperimentKind::TopologyAttack,
            ExperimentParams::InversionQuality(_) => ExperimentKind::InversionQuality,
            ExperimentParams::ConsensusCheck(_) => ExperimentKind::ConsensusCheck,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub master_seed: u64,
    /// Thread count; results do not depend on it.
    pub workers: Option<usize>,
    pub out_dir: Option<String>,
    pub params: ExperimentParams,
}

struct Keys {
    map: BTreeMap<String, (usize, String)>,
}

fn config_err(line: usize, key: &str, msg: impl Display) -> Error {
    Error::Config(format!("line {line}: {key}: {msg}"))
}

impl Keys {
    fn parse(text: &str) -> Result<Keys> {
        let mut map = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", i + 1)))?;
            let key = k.trim().to_string();
            if map.insert(key.clone(), (i + 1, v.trim().to_string())).is_some() {
                return Err(Error::Config(format!("line {}: duplicate key {key}", i + 1)));
            }
        }
        Ok(Keys { map })
    }

    fn take<T: FromStr>(&mut self, key: &str, default: T) -> Result<T>
    where
        T::Err: Display,
    {
        match self.map.remove(key) {
            None => Ok(default),
            Some((line, v)) => v.parse().map_err(|e| config_err(line, key, e)),
        }
    }

    fn take_with<T>(&mut self, key: &str, default: T, f: impl Fn(&str) -> std::result::Result<T, String>) -> Result<T> {
        match self.map.remove(key) {
            None => Ok(default),
            Some((line, v)) => f(&v).map_err(|e| config_err(line, key, e)),
        }
    }

    fn finish(self) -> Result<()> {
        match self.map.into_iter().next() {
            None => Ok(()),
            Some((k, (line, _))) => Err(Error::Config(format!("line {line}: unknown key {k}"))),
        }
    }
}

fn usize_list(v: &str) -> std::result::Result<Vec<usize>, String> {
    let mut out = Vec::new();
    for part in v.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        if let Some((a, b)) = part.split_once("..=") {
            let a: usize = a.trim().parse().map_err(|e| format!("{part}: {e}"))?;
            let b: usize = b.trim().parse().map_err(|e| format!("{part}: {e}"))?;
            if b < a {
                return Err(format!("empty range {part}"));
            }
            out.extend(a..=b);
        } else {
            out.push(part.parse().map_err(|e| format!("{part}: {e}"))?);
        }
    }
    if out.is_empty() {
        return Err("empty list".into());
    }
    Ok(out)
}

fn f64_list(v: &str) -> std::result::Result<Vec<f64>, String> {
    let out: Vec<f64> = v
        .split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| p.parse::<f64>().map_err(|e| format!("{p}: {e}")))
        .collect::<std::result::Result<_, _>>()?;
    if out.is_empty() {
        return Err("empty list".into());
    }
    Ok(out)
}

fn topology_list(v: &str, gamma: f64) -> std::result::Result<Vec<Topology>, String> {
    v.split(',')
        .map(str::trim)
        .map(|t| match t {
            "poisson" => Ok(Topology::Poisson),
            "power_law" => Ok(Topology::PowerLaw { gamma }),
            other => Err(format!("unknown topology {other}")),
        })
        .collect()
}

fn distribution_list(v: &str) -> std::result::Result<Vec<PrivateDataModel>, String> {
    v.split(',')
        .map(str::trim)
        .map(|d| match d {
            "gaussian" => Ok(PrivateDataModel::standard_gaussian()),
            "uniform" => Ok(PrivateDataModel::unit_uniform()),
            other => Err(format!("unknown distribution {other}")),
        })
        .collect()
}

fn round_policy(v: &str) -> std::result::Result<RoundPolicy, String> {
    match v {
        "average" => Ok(RoundPolicy::Average),
        _ => v
            .strip_prefix("single:")
            .and_then(|r| r.parse().ok())
            .map(RoundPolicy::Single)
            .ok_or_else(|| format!("expected average or single:<round>, got {v}")),
    }
}

fn stop_rule(v: &str) -> std::result::Result<StopRule, String> {
    match v {
        "true_mean" => Ok(StopRule::TrueMean),
        "successive_difference" => Ok(StopRule::SuccessiveDifference),
        other => Err(format!("unknown stop rule {other}")),
    }
}

fn corruption_kind(v: &str) -> std::result::Result<CorruptionKind, String> {
    match v {
        "degree_targeted" => Ok(CorruptionKind::DegreeTargeted),
        "uniform_random" => Ok(CorruptionKind::UniformRandom),
        other => Err(format!("unknown corruption strategy {other}")),
    }
}

fn check(cond: bool, msg: impl Into<String>) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::Config(msg.into()))
    }
}

fn join<T: Display>(v: &[T]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

fn topology_names(v: &[Topology]) -> String {
    v.iter().map(Topology::name).collect::<Vec<_>>().join(",")
}

fn policy_text(p: RoundPolicy) -> String {
    match p {
        RoundPolicy::Average => "average".into(),
        RoundPolicy::Single(r) => format!("single:{r}"),
    }
}

fn stop_text(s: StopRule) -> &'static str {
    match s {
        StopRule::TrueMean => "true_mean",
        StopRule::SuccessiveDifference => "successive_difference",
    }
}

impl ExperimentConfig {
    /// Parses `text` for experiment `kind`. A `--seed` style override wins
    /// over `master_seed` in the file.
    pub fn parse(kind: ExperimentKind, text: &str, seed_override: Option<u64>) -> Result<Self> {
        let mut keys = Keys::parse(text)?;
        if let Some((line, id)) = keys.map.remove("experiment") {
            if id != kind.id() {
                return Err(config_err(
                    line,
                    "experiment",
                    format!("file is for {id}, not {}", kind.id()),
                ));
            }
        }
        let file_seed: Option<u64> = match keys.map.remove("master_seed") {
            None => None,
            Some((line, v)) => Some(v.parse().map_err(|e| config_err(line, "master_seed", e))?),
        };
        let master_seed = seed_override
            .or(file_seed)
            .ok_or_else(|| Error::Config("master_seed is required".into()))?;
        let workers: Option<usize> = match keys.map.remove("workers") {
            None => None,
            Some((line, v)) => Some(v.parse().map_err(|e| config_err(line, "workers", e))?),
        };
        let out_dir = keys.map.remove("out_dir").map(|(_, v)| v);
        let params = match kind {
            ExperimentKind::MiCurve => ExperimentParams::MiCurve(Self::mi_curve(&mut keys)?),
            ExperimentKind::TopologyAttack => ExperimentParams::TopologyAttack(Self::topology_attack(&mut keys)?),
            ExperimentKind::InversionQuality => ExperimentParams::InversionQuality(Self::inversion(&mut keys)?),
            ExperimentKind::ConsensusCheck => ExperimentParams::ConsensusCheck(Self::consensus_check(&mut keys)?),
        };
        keys.finish()?;
        let cfg = ExperimentConfig {
            master_seed,
            workers,
            out_dir,
            params,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Defaults for `kind` with the given seed.
    pub fn defaults(kind: ExperimentKind, master_seed: u64) -> Self {
        ExperimentConfig::parse(kind, "", Some(master_seed)).expect("defaults are valid")
    }

    pub fn kind(&self) -> ExperimentKind {
        self.params.kind()
    }

    fn mi_curve(keys: &mut Keys) -> Result<MiCurveParams> {
        let d = MiCurveParams::default();
        Ok(MiCurveParams {
            m_values: keys.take_with("m_values", d.m_values, usize_list)?,
            samples: keys.take("samples", d.samples)?,
            k: keys.take("k", d.k)?,
            runs: keys.take("runs", d.runs)?,
            distributions: keys.take_with("distributions", d.distributions, distribution_list)?,
        })
    }

    fn topology_attack(keys: &mut Keys) -> Result<TopologyAttackParams> {
        let d = TopologyAttackParams::default();
        let gamma = keys.take("gamma", d.gamma)?;
        Ok(TopologyAttackParams {
            n: keys.take("n", d.n)?,
            m: keys.take("m", d.m)?,
            gamma,
            topologies: keys.take_with("topologies", default_topologies(gamma), |v| topology_list(v, gamma))?,
            corruption: keys.take_with("corruption", d.corruption, corruption_kind)?,
            adaptive: keys.take("adaptive", d.adaptive)?,
            fractions: keys.take_with("fractions", d.fractions, f64_list)?,
            runs: keys.take("runs", d.runs)?,
            membership: keys.take("membership", d.membership)?,
            samples_per_node: keys.take("samples_per_node", d.samples_per_node)?,
            nonmembers_per_node: keys.take("nonmembers_per_node", d.nonmembers_per_node)?,
            hidden: keys.take("hidden", d.hidden)?,
            classes: keys.take("classes", d.classes)?,
            fl_rounds: keys.take("fl_rounds", d.fl_rounds)?,
            step_size: keys.take("step_size", d.step_size)?,
            round_policy: keys.take_with("round_policy", d.round_policy, round_policy)?,
            consensus_tol: keys.take("consensus_tol", d.consensus_tol)?,
            connected: keys.take("connected", d.connected)?,
        })
    }

    fn inversion(keys: &mut Keys) -> Result<InversionParams> {
        let d = InversionParams::default();
        Ok(InversionParams {
            n: keys.take("n", d.n)?,
            m: keys.take("m", d.m)?,
            mk_values: keys.take_with("mk_values", d.mk_values, usize_list)?,
            trials: keys.take("trials", d.trials)?,
            iters: keys.take("iters", d.iters)?,
            lr: keys.take("lr", d.lr)?,
            restarts: keys.take("restarts", d.restarts)?,
            hidden: keys.take("hidden", d.hidden)?,
            classes: keys.take("classes", d.classes)?,
            labels_known: keys.take("labels_known", d.labels_known)?,
            duplicate_labels: keys.take("duplicate_labels", d.duplicate_labels)?,
            image_pairs: keys.take("image_pairs", d.image_pairs)?,
        })
    }

    fn consensus_check(keys: &mut Keys) -> Result<ConsensusCheckParams> {
        let d = ConsensusCheckParams::default();
        let gamma = keys.take("gamma", d.gamma)?;
        Ok(ConsensusCheckParams {
            n: keys.take("n", d.n)?,
            m: keys.take("m", d.m)?,
            gamma,
            topologies: keys.take_with("topologies", default_topologies(gamma), |v| topology_list(v, gamma))?,
            runs: keys.take("runs", d.runs)?,
            tol: keys.take("tol", d.tol)?,
            max_rounds: keys.take("max_rounds", d.max_rounds)?,
            stop: keys.take_with("stop", d.stop, stop_rule)?,
            include_complete: keys.take("include_complete", d.include_complete)?,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(w) = self.workers {
            check(w >= 1, "workers must be at least 1")?;
        }
        match &self.params {
            ExperimentParams::MiCurve(p) => {
                check(
                    p.m_values.iter().all(|&m| (2..=1000).contains(&m)),
                    "m_values must lie in [2, 1000]",
                )?;
                check(p.samples >= 1000, "samples must be at least 1000")?;
                check(p.k >= 1, "k must be at least 1")?;
                check(p.runs >= 1, "runs must be at least 1")?;
                check(!p.distributions.is_empty(), "no distributions")?;
            }
            ExperimentParams::TopologyAttack(p) => {
                check(p.n >= 2, "n must be at least 2")?;
                check(p.m <= p.n * (p.n - 1) / 2, "m exceeds the number of node pairs")?;
                check(p.gamma > 1.0 && p.gamma.is_finite(), "gamma must exceed 1")?;
                check(!p.topologies.is_empty(), "no topologies")?;
                check(
                    p.fractions.iter().all(|f| (0.0..=1.0).contains(f)),
                    "fractions must lie in [0, 1]",
                )?;
                check(p.runs >= 1, "runs must be at least 1")?;
                if p.membership {
                    check(p.samples_per_node >= 1, "samples_per_node must be at least 1")?;
                    check(p.nonmembers_per_node >= 1, "nonmembers_per_node must be at least 1")?;
                    check(p.hidden >= 1, "hidden must be at least 1")?;
                    check((2..=PATTERN_COUNT).contains(&p.classes), "classes must lie in [2, 8]")?;
                    check(p.fl_rounds >= 1, "fl_rounds must be at least 1")?;
                    check(
                        p.step_size > 0.0 && p.step_size.is_finite(),
                        "step_size must be positive",
                    )?;
                    check(p.consensus_tol > 0.0, "consensus_tol must be positive")?;
                    check(p.connected, "membership runs consensus and needs connected graphs")?;
                    if let RoundPolicy::Single(r) = p.round_policy {
                        check(r < p.fl_rounds, "single round index beyond fl_rounds")?;
                    }
                }
            }
            ExperimentParams::InversionQuality(p) => {
                check(p.n >= 2, "n must be at least 2")?;
                check(p.m <= p.n * (p.n - 1) / 2, "m exceeds the number of node pairs")?;
                check(!p.mk_values.is_empty(), "no mk_values")?;
                check(
                    p.mk_values.iter().all(|&k| k >= 1 && k <= p.n),
                    "mk_values must lie in [1, n]",
                )?;
                check(p.trials >= 10, "trials must be at least 10")?;
                check(p.restarts >= 1, "restarts must be at least 1")?;
                check(p.lr > 0.0 && p.lr.is_finite(), "lr must be positive")?;
                check((2..=PATTERN_COUNT).contains(&p.classes), "classes must lie in [2, 8]")?;
                check(
                    p.mk_values.iter().all(|&k| k <= p.classes),
                    "distinct labels need classes >= every m_k",
                )?;
                check(p.hidden >= 1, "hidden must be at least 1")?;
            }
            ExperimentParams::ConsensusCheck(p) => {
                check(p.n >= 2, "n must be at least 2")?;
                check(p.m >= p.n - 1, "m too small for a connected graph")?;
                check(p.m <= p.n * (p.n - 1) / 2, "m exceeds the number of node pairs")?;
                check(p.runs >= 1, "runs must be at least 1")?;
                check(p.tol > 0.0, "tol must be positive")?;
                check(!p.topologies.is_empty(), "no topologies")?;
            }
        }
        Ok(())
    }

    /// Every setting that affects results, one `key=value` per line in key
    /// order. Workers and the output directory are left out.
    pub fn canonical_text(&self) -> String {
        let mut kv: Vec<(&str, String)> = vec![
            ("experiment", self.kind().id().to_string()),
            ("master_seed", self.master_seed.to_string()),
        ];
        match &self.params {
            ExperimentParams::MiCurve(p) => {
                kv.extend([
                    ("m_values", join(&p.m_values)),
                    ("samples", p.samples.to_string()),
                    ("k", p.k.to_string()),
                    ("runs", p.runs.to_string()),
                    (
                        "distributions",
                        p.distributions.iter().map(|d| d.name()).collect::<Vec<_>>().join(","),
                    ),
                ]);
            }
            ExperimentParams::TopologyAttack(p) => {
                kv.extend([
                    ("n", p.n.to_string()),
                    ("m", p.m.to_string()),
                    ("gamma", p.gamma.to_string()),
                    ("topologies", topology_names(&p.topologies)),
                    (
                        "corruption",
                        match p.corruption {
                            CorruptionKind::DegreeTargeted => "degree_targeted".into(),
                            CorruptionKind::UniformRandom => "uniform_random".into(),
                        },
                    ),
                    ("adaptive", p.adaptive.to_string()),
                    ("fractions", join(&p.fractions)),
                    ("runs", p.runs.to_string()),
                    ("membership", p.membership.to_string()),
                    ("samples_per_node", p.samples_per_node.to_string()),
                    ("nonmembers_per_node", p.nonmembers_per_node.to_string()),
                    ("hidden", p.hidden.to_string()),
                    ("classes", p.classes.to_string()),
                    ("fl_rounds", p.fl_rounds.to_string()),
                    ("step_size", p.step_size.to_string()),
                    ("round_policy", policy_text(p.round_policy)),
                    ("consensus_tol", p.consensus_tol.to_string()),
                    ("connected", p.connected.to_string()),
                ]);
            }
            ExperimentParams::InversionQuality(p) => {
                kv.extend([
                    ("n", p.n.to_string()),
                    ("m", p.m.to_string()),
                    ("mk_values", join(&p.mk_values)),
                    ("trials", p.trials.to_string()),
                    ("iters", p.iters.to_string()),
                    ("lr", p.lr.to_string()),
                    ("restarts", p.restarts.to_string()),
                    ("hidden", p.hidden.to_string()),
                    ("classes", p.classes.to_string()),
                    ("labels_known", p.labels_known.to_string()),
                    ("duplicate_labels", p.duplicate_labels.to_string()),
                    ("image_pairs", p.image_pairs.to_string()),
                ]);
            }
            ExperimentParams::ConsensusCheck(p) => {
                kv.extend([
                    ("n", p.n.to_string()),
                    ("m", p.m.to_string()),
                    ("gamma", p.gamma.to_string()),
                    ("topologies", topology_names(&p.topologies)),
                    ("runs", p.runs.to_string()),
                    ("tol", p.tol.to_string()),
                    ("max_rounds", p.max_rounds.to_string()),
                    ("stop", stop_text(p.stop).to_string()),
                    ("include_complete", p.include_complete.to_string()),
                ]);
            }
        }
        kv.sort_by(|a, b| a.0.cmp(b.0));
        kv.into_iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    /// Hex SHA-256 of [`Self::canonical_text`].
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical_text().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_lists_ranges_and_comments() {
        let text = "# sweep\nexperiment = mi_curve\nmaster_seed = 9\nm_values = 2..=4, 10\nsamples=2000 # fewer\n";
        let cfg = ExperimentConfig::parse(ExperimentKind::MiCurve, text, None).unwrap();
        assert_eq!(cfg.master_seed, 9);
        match cfg.params {
            ExperimentParams::MiCurve(p) => {
                assert_eq!(p.m_values, vec![2, 3, 4, 10]);
                assert_eq!(p.samples, 2000);
                assert_eq!(p.k, 3);
            }
            _ => panic!("wrong experiment"),
        }
    }

    #[test]
    fn rejects_unknown_keys_missing_seed_and_bad_values() {
        let unknown = ExperimentConfig::parse(ExperimentKind::MiCurve, "master_seed=1\nsample=10\n", None);
        assert!(matches!(unknown, Err(Error::Config(m)) if m.contains("unknown key sample")));
        assert!(ExperimentConfig::parse(ExperimentKind::MiCurve, "", None).is_err());
        assert!(ExperimentConfig::parse(ExperimentKind::MiCurve, "master_seed=1\nm_values=1,2\n", None).is_err());
        assert!(ExperimentConfig::parse(
            ExperimentKind::TopologyAttack,
            "master_seed=1\nfractions=0.5,1.5\n",
            None
        )
        .is_err());
        assert!(
            ExperimentConfig::parse(ExperimentKind::TopologyAttack, "master_seed=1\ntopologies=ring\n", None).is_err()
        );
        assert!(ExperimentConfig::parse(
            ExperimentKind::MiCurve,
            "experiment=inversion_quality\nmaster_seed=1\n",
            None
        )
        .is_err());
        assert!(ExperimentConfig::parse(ExperimentKind::MiCurve, "master_seed=1\nk=3\nk=4\n", None).is_err());
        // Keys of one experiment are unknown to another.
        assert!(ExperimentConfig::parse(ExperimentKind::MiCurve, "master_seed=1\nfractions=0.1\n", None).is_err());
    }

    #[test]
    fn seed_override_and_hash_stability() {
        let a = ExperimentConfig::parse(ExperimentKind::ConsensusCheck, "master_seed=1\nworkers=3\n", Some(5)).unwrap();
        let b = ExperimentConfig::defaults(ExperimentKind::ConsensusCheck, 5);
        assert_eq!(a.master_seed, 5);
        assert_eq!(a.canonical_text(), b.canonical_text());
        assert_eq!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
        let c = ExperimentConfig::defaults(ExperimentKind::ConsensusCheck, 6);
        assert_ne!(a.hash(), c.hash());
    }

    #[test]
    fn canonical_text_reparses_to_the_same_config() {
        for kind in ExperimentKind::ALL {
            let cfg = ExperimentConfig::defaults(kind, 77);
            let again = ExperimentConfig::parse(kind, &cfg.canonical_text(), None).unwrap();
            assert_eq!(cfg.params, again.params);
        }
    }
}
