//! Leakage against the corrupt fraction, per topology: honest component
//! structure, analytic privacy loss and membership inference.
//!
//! Trial `t` uses one seed for every topology and fraction, so both
//! topologies see the same data, model initialization and candidates.

use rand::Rng;
use rayon::prelude::*;

use super::config::{CorruptionKind, ExperimentConfig, TopologyAttackParams};
use super::plot::{render_svg, PlotSpec};
use super::{cell, record, run_json, summarize, ExperimentOutput, SummaryEntry, Table};
use crate::adversary::{honest_partition, select_corrupt, Amount, CorruptionStrategy, HonestPartition};
use crate::attack::image::{synthetic_image, IMAGE_SIDE};
use crate::attack::{
    decentralized_round, local_gradient, membership_attack_eval, Architecture, AttackMetrics, GradientBundle,
    LocalDataset, MembershipCandidate, Sample, Target, ToyModel,
};
use crate::consensus::{metropolis_weights, ConsensusOptions};
use crate::error::Result;
use crate::graph::{Graph, Topology};
use crate::privacy::network_privacy_loss;
use crate::seed::{child_seed, derive_seed, label_hash, rng_from_seed};

pub const COMPONENT_COLUMNS: [&str; 10] = [
    "topology",
    "fraction",
    "trial",
    "corrupt",
    "largest",
    "components",
    "singletons",
    "fully_revealed",
    "privacy_loss",
    "seed",
];

pub const MEMBERSHIP_COLUMNS: [&str; 6] = ["fraction", "topology", "trial", "auc", "success_rate", "seed"];

pub const SUMMARY_COLUMNS: [&str; 9] = [
    "topology",
    "fraction",
    "runs",
    "mean_success_rate",
    "std_success_rate",
    "mean_auc",
    "mean_privacy_loss",
    "mean_largest_component",
    "mean_fully_revealed",
];

#[derive(Debug, Clone, PartialEq)]
pub struct ComponentRow {
    pub topology: &'static str,
    pub fraction: f64,
    pub trial: usize,
    pub corrupt: usize,
    pub largest: usize,
    pub components: usize,
    pub singletons: usize,
    pub fully_revealed: usize,
    /// Mean exact leakage over nodes in components of size >= 2.
    pub privacy_loss: Option<f64>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MembershipRow {
    pub topology: &'static str,
    pub fraction: f64,
    pub trial: usize,
    pub auc: f64,
    pub success_rate: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrialRows {
    pub components: Vec<ComponentRow>,
    pub membership: Vec<MembershipRow>,
}

pub fn trial_seed(master: u64, trial: usize) -> u64 {
    derive_seed(master, "topology_attack", trial as u64)
}

fn strategy(p: &TopologyAttackParams, fraction: f64) -> CorruptionStrategy {
    let amount = Amount::Fraction(fraction);
    match p.corruption {
        CorruptionKind::DegreeTargeted => CorruptionStrategy::DegreeTargeted {
            amount,
            adaptive: p.adaptive,
        },
        CorruptionKind::UniformRandom => CorruptionStrategy::UniformRandom { amount },
    }
}

fn random_sample<R: Rng>(classes: usize, rng: &mut R) -> Sample {
    let class = rng.random_range(0..classes);
    Sample {
        x: synthetic_image(class, rng).pixels,
        target: Target::Class(class),
    }
}

/// Training transcript the membership adversary works from.
struct Observations {
    bundles: Vec<GradientBundle>,
    /// `[node][sample][round]` gradients of each member sample.
    members: Vec<Vec<Vec<Vec<f64>>>>,
    /// `[node][candidate][round]` gradients of fresh non-member samples.
    nonmembers: Vec<Vec<Vec<Vec<f64>>>>,
}

fn train_and_observe(p: &TopologyAttackParams, g: &Graph, seed: u64) -> Result<Observations> {
    let n = g.node_count();
    let arch = Architecture::Mlp {
        inputs: IMAGE_SIDE * IMAGE_SIDE,
        hidden: p.hidden,
        classes: p.classes,
    };
    let datasets: Vec<LocalDataset> = (0..n)
        .map(|i| {
            let mut rng = rng_from_seed(child_seed(seed, 1000 + i as u64));
            LocalDataset::new(
                (0..p.samples_per_node)
                    .map(|_| random_sample(p.classes, &mut rng))
                    .collect(),
            )
        })
        .collect();
    let outsiders: Vec<Vec<Sample>> = (0..n)
        .map(|i| {
            let mut rng = rng_from_seed(child_seed(seed, 5000 + i as u64));
            (0..p.nonmembers_per_node)
                .map(|_| random_sample(p.classes, &mut rng))
                .collect()
        })
        .collect();
    let a = metropolis_weights(g)?;
    let opts = ConsensusOptions {
        tol: p.consensus_tol,
        ..ConsensusOptions::default()
    };
    let mut models = vec![ToyModel::init(arch, p.step_size, child_seed(seed, 3)); n];
    let mut bundles = Vec::with_capacity(p.fl_rounds);
    let mut members = vec![vec![Vec::new(); p.samples_per_node]; n];
    let mut nonmembers = vec![vec![Vec::new(); p.nonmembers_per_node]; n];
    for round in 0..p.fl_rounds {
        // Corrupt nodes hold the current model and can evaluate any sample.
        let seen = &models[0];
        for i in 0..n {
            for (j, s) in datasets[i].samples.iter().enumerate() {
                members[i][j].push(local_gradient(seen, std::slice::from_ref(s))?);
            }
            for (j, s) in outsiders[i].iter().enumerate() {
                nonmembers[i][j].push(local_gradient(seen, std::slice::from_ref(s))?);
            }
        }
        let out = decentralized_round(g, &a, &models, &datasets, round, &opts)?;
        models = out.models;
        bundles.push(out.bundle);
    }
    Ok(Observations {
        bundles,
        members,
        nonmembers,
    })
}

fn membership_outcome(p: &TopologyAttackParams, obs: &Observations, part: &HonestPartition) -> Result<(f64, f64)> {
    let mut candidates = Vec::new();
    for comp in &part.components {
        for &i in comp {
            for grads in &obs.members[i] {
                candidates.push(MembershipCandidate {
                    target_node: i,
                    member: true,
                    gradients: grads.clone(),
                });
            }
            for grads in &obs.nonmembers[i] {
                candidates.push(MembershipCandidate {
                    target_node: i,
                    member: false,
                    gradients: grads.clone(),
                });
            }
        }
    }
    let out = membership_attack_eval(part, &obs.bundles, &candidates, p.round_policy)?;
    match out.metrics {
        AttackMetrics::Membership { auc, success_rate, .. } => Ok((auc, success_rate)),
        _ => unreachable!("membership evaluation returns membership metrics"),
    }
}

/// All rows of one trial on one topology.
pub fn trial(p: &TopologyAttackParams, topology: &Topology, trial: usize, seed: u64) -> Result<TrialRows> {
    let graph_seed = child_seed(seed, label_hash(topology.name()));
    let g = if p.connected {
        topology.generate_connected(p.n, p.m, graph_seed)?
    } else {
        topology.generate(p.n, p.m, graph_seed)?
    };
    let obs = if p.membership {
        Some(train_and_observe(p, &g, seed)?)
    } else {
        None
    };
    let mut rows = TrialRows::default();
    for &fraction in &p.fractions {
        let corrupt = select_corrupt(&g, &strategy(p, fraction), child_seed(seed, 2))?;
        let part = honest_partition(&g, &corrupt)?;
        let loss = network_privacy_loss(&part);
        rows.components.push(ComponentRow {
            topology: topology.name(),
            fraction,
            trial,
            corrupt: corrupt.len(),
            largest: part.largest(),
            components: part.count(),
            singletons: part.singleton_count(),
            fully_revealed: loss.fully_revealed,
            privacy_loss: loss.mean_mi,
            seed,
        });
        if let Some(obs) = &obs {
            if part.honest_count() == 0 {
                continue;
            }
            let (auc, success_rate) = membership_outcome(p, obs, &part)?;
            rows.membership.push(MembershipRow {
                topology: topology.name(),
                fraction,
                trial,
                auc,
                success_rate,
                seed,
            });
        }
    }
    Ok(rows)
}

/// Every trial, ordered by topology then trial index.
pub fn rows(p: &TopologyAttackParams, master: u64) -> Result<Vec<TrialRows>> {
    let jobs: Vec<(Topology, usize)> = p
        .topologies
        .iter()
        .flat_map(|t| (0..p.runs).map(move |r| (*t, r)))
        .collect();
    jobs.par_iter()
        .map(|(t, r)| trial(p, t, *r, trial_seed(master, *r)))
        .collect()
}

fn mean_of(
    entries: &[SummaryEntry],
    table: &str,
    topology: &str,
    fraction: &str,
    metric: &str,
) -> Option<(f64, f64, usize)> {
    entries
        .iter()
        .find(|e| {
            e.table == table
                && e.metric == metric
                && e.group.get("topology").map(String::as_str) == Some(topology)
                && e.group.get("fraction").map(String::as_str) == Some(fraction)
        })
        .map(|e| (e.mean, e.std, e.count))
}

pub(crate) fn run(cfg: &ExperimentConfig, p: &TopologyAttackParams) -> Result<ExperimentOutput> {
    let trials = rows(p, cfg.master_seed)?;
    let mut components = Table::new("components", &COMPONENT_COLUMNS);
    let mut membership = Table::new("membership", &MEMBERSHIP_COLUMNS);
    for t in &trials {
        for r in &t.components {
            components.push(vec![
                r.topology.to_string(),
                r.fraction.to_string(),
                r.trial.to_string(),
                r.corrupt.to_string(),
                r.largest.to_string(),
                r.components.to_string(),
                r.singletons.to_string(),
                r.fully_revealed.to_string(),
                cell(r.privacy_loss),
                r.seed.to_string(),
            ]);
        }
        for r in &t.membership {
            membership.push(vec![
                r.fraction.to_string(),
                r.topology.to_string(),
                r.trial.to_string(),
                r.auc.to_string(),
                r.success_rate.to_string(),
                r.seed.to_string(),
            ]);
        }
    }
    let mut summary = summarize(
        &components,
        &["topology", "fraction"],
        &["largest", "privacy_loss", "fully_revealed"],
    )?;
    summary.extend(summarize(
        &membership,
        &["topology", "fraction"],
        &["success_rate", "auc"],
    )?);

    let mut table = Table::new("topology_summary", &SUMMARY_COLUMNS);
    for t in &p.topologies {
        for f in &p.fractions {
            let f = f.to_string();
            let get = |tab: &str, metric: &str| mean_of(&summary, tab, t.name(), &f, metric);
            let runs = get("components", "largest").map_or(0, |v| v.2);
            let success = get("membership", "success_rate");
            table.push(vec![
                t.name().to_string(),
                f.clone(),
                runs.to_string(),
                cell(success.map(|v| v.0)),
                cell(success.map(|v| v.1)),
                cell(get("membership", "auc").map(|v| v.0)),
                cell(get("components", "privacy_loss").map(|v| v.0)),
                cell(get("components", "largest").map(|v| v.0)),
                cell(get("components", "fully_revealed").map(|v| v.0)),
            ]);
        }
    }
    let summary_csv = table.to_csv();
    let y = if p.membership {
        "mean_success_rate"
    } else {
        "mean_privacy_loss"
    };
    let svg = render_svg(
        &summary_csv,
        &PlotSpec {
            title: "Leakage against corrupt fraction",
            x: "fraction",
            ys: &[y],
            group: &["topology"],
        },
    )?;
    let seeds: Vec<u64> = (0..p.runs).map(|r| trial_seed(cfg.master_seed, r)).collect();
    let mut files = vec![("components.csv".to_string(), components.to_csv())];
    let mut raw = vec![components];
    if p.membership {
        files.push(("membership.csv".into(), membership.to_csv()));
        raw.push(membership);
    }
    let record = record(cfg, seeds, raw, summary);
    files.extend([
        ("topology_summary.csv".to_string(), summary_csv),
        ("topology_attack.svg".to_string(), svg),
        ("run.json".to_string(), run_json(&record)?),
    ]);
    Ok(ExperimentOutput { record, files })
}
