//! Federated training rounds, decentralized and centralized.

use serde::{Deserialize, Serialize};

use crate::attack::model::{local_gradient, LocalDataset, ToyModel};
use crate::consensus::{run_consensus, ConsensusOptions, MixingMatrix, NodeVectors, Transcript};
use crate::error::{invalid, Error, Result};
use crate::graph::Graph;

/// Largest parameter spread tolerated between nodes at the start of a round.
pub const SYNC_TOL: f64 = 1e-6;

/// Local gradients of every node in one round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientBundle {
    pub round: usize,
    pub gradients: Vec<Vec<f64>>,
}

impl GradientBundle {
    pub fn new(round: usize, gradients: Vec<Vec<f64>>) -> Result<Self> {
        if let Some(first) = gradients.first() {
            if gradients.iter().any(|g| g.len() != first.len()) {
                return invalid("gradients in a bundle must share one dimension");
            }
        }
        Ok(GradientBundle { round, gradients })
    }

    pub fn dim(&self) -> usize {
        self.gradients.first().map_or(0, Vec::len)
    }

    pub fn average(&self) -> Vec<f64> {
        let mut avg = vec![0.0; self.dim()];
        for g in &self.gradients {
            for (a, v) in avg.iter_mut().zip(g) {
                *a += v;
            }
        }
        let n = self.gradients.len().max(1) as f64;
        avg.iter_mut().for_each(|a| *a /= n);
        avg
    }

    /// Sum of the gradients of `nodes`.
    pub fn sum_over(&self, nodes: &[usize]) -> Vec<f64> {
        let mut s = vec![0.0; self.dim()];
        for &i in nodes {
            for (a, v) in s.iter_mut().zip(&self.gradients[i]) {
                *a += v;
            }
        }
        s
    }
}

#[derive(Debug, Clone)]
pub struct RoundResult {
    pub models: Vec<ToyModel>,
    pub bundle: GradientBundle,
    pub transcript: Option<Transcript>,
    pub consensus_rounds: usize,
}

fn node_gradients(models: &[ToyModel], datasets: &[LocalDataset]) -> Result<Vec<Vec<f64>>> {
    if models.len() != datasets.len() {
        return invalid(format!("{} models for {} datasets", models.len(), datasets.len()));
    }
    models
        .iter()
        .zip(datasets)
        .map(|(m, d)| local_gradient(m, &d.samples))
        .collect()
}

fn check_synchronized(models: &[ToyModel]) -> Result<()> {
    let Some(first) = models.first() else {
        return invalid("no models");
    };
    for m in models {
        if m.architecture != first.architecture {
            return invalid("nodes disagree on the architecture");
        }
        let spread = m
            .params
            .iter()
            .zip(&first.params)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        if spread > SYNC_TOL {
            return invalid(format!("node models diverged by {spread:e}"));
        }
    }
    Ok(())
}

/// One round: local gradients, consensus on the stacked gradients, then
/// each node steps with its own consensus estimate.
pub fn decentralized_round(
    g: &Graph,
    a: &MixingMatrix,
    models: &[ToyModel],
    datasets: &[LocalDataset],
    round: usize,
    opts: &ConsensusOptions,
) -> Result<RoundResult> {
    if models.len() != g.node_count() {
        return invalid(format!(
            "{} models on a graph with {} nodes",
            models.len(),
            g.node_count()
        ));
    }
    check_synchronized(models)?;
    let gradients = node_gradients(models, datasets)?;
    let x0 = NodeVectors::new(&gradients)?;
    let outcome = run_consensus(g, a, &x0, opts)?;
    if !outcome.converged {
        return Err(Error::ConsensusNotConverged {
            rounds: outcome.rounds_used(),
        });
    }
    let models = models
        .iter()
        .enumerate()
        .map(|(i, m)| {
            let mut next = m.clone();
            next.apply_update(outcome.state.x.row(i));
            next
        })
        .collect();
    Ok(RoundResult {
        models,
        bundle: GradientBundle::new(round, gradients)?,
        transcript: outcome.transcript,
        consensus_rounds: outcome.state.round,
    })
}

/// The centralized loop: exact average of the local gradients, one step.
pub fn centralized_round(
    model: &ToyModel,
    datasets: &[LocalDataset],
    round: usize,
) -> Result<(ToyModel, GradientBundle)> {
    let models = vec![model.clone(); datasets.len()];
    let bundle = GradientBundle::new(round, node_gradients(&models, datasets)?)?;
    let mut next = model.clone();
    next.apply_update(&bundle.average());
    Ok((next, bundle))
}

/// Parameter vectors after each round, starting with the initial model.
/// Decentralized runs report node 0.
pub fn train_decentralized(
    g: &Graph,
    a: &MixingMatrix,
    init: &ToyModel,
    datasets: &[LocalDataset],
    rounds: usize,
    opts: &ConsensusOptions,
) -> Result<Vec<Vec<f64>>> {
    let mut models = vec![init.clone(); g.node_count()];
    let mut trajectory = vec![init.params.clone()];
    for r in 0..rounds {
        models = decentralized_round(g, a, &models, datasets, r, opts)?.models;
        trajectory.push(models[0].params.clone());
    }
    Ok(trajectory)
}

pub fn train_centralized(init: &ToyModel, datasets: &[LocalDataset], rounds: usize) -> Result<Vec<Vec<f64>>> {
    let mut model = init.clone();
    let mut trajectory = vec![model.params.clone()];
    for r in 0..rounds {
        model = centralized_round(&model, datasets, r)?.0;
        trajectory.push(model.params.clone());
    }
    Ok(trajectory)
}
