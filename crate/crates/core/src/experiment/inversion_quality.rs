//! Reconstruction quality of gradient inversion against honest component
//! size, on a random network.
//!
//! Each trial carves an honest component of exactly `m_k` nodes out of a
//! connected random graph by corrupting the boundary of a breadth-first
//! ball. Every member contributes the gradient of one private image, and
//! the adversary inverts the component's gradient sum.

use std::collections::VecDeque;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;

use super::config::{ExperimentConfig, InversionParams};
use super::plot::{render_svg, PlotSpec};
use super::{record, run_json, summarize, ExperimentOutput, Table};
use crate::adversary::honest_partition;
use crate::attack::image::{synthetic_image, GrayImage, IMAGE_SIDE};
use crate::attack::{
    gradient_inversion, local_gradient, match_reconstructions, ssim, Architecture, InversionConfig, LabelKnowledge,
    Sample, Target, ToyModel,
};
use crate::error::{Error, Result};
use crate::graph::{Graph, Topology};
use crate::seed::{child_seed, derive_seed, rng_from_seed};

pub const COLUMNS: [&str; 8] = [
    "m_k",
    "variant",
    "trial",
    "ssim_mean",
    "ssim_min",
    "ssim_max",
    "best_loss",
    "seed",
];
pub const SUMMARY_COLUMNS: [&str; 5] = ["m_k", "variant", "trials", "mean_ssim", "std_ssim"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelVariant {
    /// All members hold different classes.
    Unique,
    /// The first two members share a class.
    Duplicate,
}

impl LabelVariant {
    pub fn name(&self) -> &'static str {
        match self {
            LabelVariant::Unique => "unique",
            LabelVariant::Duplicate => "duplicate",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InversionTrial {
    pub m_k: usize,
    pub variant: LabelVariant,
    pub trial: usize,
    /// SSIM per original, under the best label-consistent matching.
    pub ssim: Vec<f64>,
    pub best_loss: f64,
    pub originals: Vec<GrayImage>,
    /// Reconstructions reordered to line up with `originals`.
    pub reconstructions: Vec<GrayImage>,
    pub seed: u64,
}

impl InversionTrial {
    pub fn mean_ssim(&self) -> f64 {
        self.ssim.iter().sum::<f64>() / self.ssim.len() as f64
    }
}

pub fn trial_seed(master: u64, trial: usize) -> u64 {
    derive_seed(master, "inversion_quality", trial as u64)
}

/// The first `size` nodes reached by breadth-first search from `start`.
fn bfs_ball(g: &Graph, start: usize, size: usize) -> Vec<usize> {
    let mut seen = vec![false; g.node_count()];
    let mut order = Vec::with_capacity(size);
    let mut queue = VecDeque::from([start]);
    seen[start] = true;
    while let Some(v) = queue.pop_front() {
        order.push(v);
        if order.len() == size {
            break;
        }
        for &u in g.neighbors(v) {
            if !seen[u] {
                seen[u] = true;
                queue.push_back(u);
            }
        }
    }
    order
}

/// A set of exactly `m_k` nodes that forms one honest component once its
/// outer boundary is corrupted, with that boundary.
pub fn carve_component(g: &Graph, m_k: usize, start: usize) -> Result<(Vec<usize>, Vec<usize>)> {
    let ball = bfs_ball(g, start, m_k);
    if ball.len() != m_k {
        return Err(Error::GenerationFailed {
            attempts: 1,
            reason: format!("component of node {start} has fewer than {m_k} nodes"),
        });
    }
    let mut inside = vec![false; g.node_count()];
    ball.iter().for_each(|&v| inside[v] = true);
    let mut boundary: Vec<usize> = ball
        .iter()
        .flat_map(|&v| g.neighbors(v).iter().copied())
        .filter(|&u| !inside[u])
        .collect();
    boundary.sort_unstable();
    boundary.dedup();
    Ok((ball, boundary))
}

fn labels_for<R: Rng>(m_k: usize, classes: usize, variant: LabelVariant, rng: &mut R) -> Vec<usize> {
    let mut all: Vec<usize> = (0..classes).collect();
    all.shuffle(rng);
    let mut labels: Vec<usize> = all[..m_k].to_vec();
    if variant == LabelVariant::Duplicate && m_k >= 2 {
        labels[1] = labels[0];
    }
    labels
}

pub fn trial(
    p: &InversionParams,
    m_k: usize,
    variant: LabelVariant,
    trial: usize,
    seed: u64,
) -> Result<InversionTrial> {
    let g = Topology::Poisson.generate_connected(p.n, p.m, child_seed(seed, 1))?;
    let start = rng_from_seed(child_seed(seed, 2)).random_range(0..p.n);
    let (members, boundary) = carve_component(&g, m_k, start)?;
    let part = honest_partition(&g, &boundary)?;
    let comp = part
        .components
        .iter()
        .find(|c| c.contains(&start))
        .expect("start node is honest");
    debug_assert_eq!(comp.len(), m_k);

    let labels = labels_for(m_k, p.classes, variant, &mut rng_from_seed(child_seed(seed, 3)));
    let samples: Vec<Sample> = labels
        .iter()
        .enumerate()
        .map(|(j, &c)| {
            let mut rng = rng_from_seed(child_seed(seed, 100 + j as u64));
            Sample {
                x: synthetic_image(c, &mut rng).pixels,
                target: Target::Class(c),
            }
        })
        .collect();
    let arch = Architecture::Mlp {
        inputs: IMAGE_SIDE * IMAGE_SIDE,
        hidden: p.hidden,
        classes: p.classes,
    };
    let model = ToyModel::init(arch, 0.1, child_seed(seed, 4));

    // Batch size one: each member's gradient is that of its single image.
    let mut target = vec![0.0; model.param_count()];
    for s in &samples {
        for (t, v) in target.iter_mut().zip(local_gradient(&model, std::slice::from_ref(s))?) {
            *t += v;
        }
    }
    let targets: Vec<Target> = samples.iter().map(|s| s.target).collect();
    let knowledge = if p.labels_known {
        LabelKnowledge::Known(targets.clone())
    } else {
        LabelKnowledge::Unknown
    };
    let cfg = InversionConfig {
        iters: p.iters,
        lr: p.lr,
        restarts: p.restarts,
        seed: child_seed(seed, 5),
    };
    let out = gradient_inversion(&target, &model, m_k, &knowledge, &cfg)?;
    let originals: Vec<Vec<f64>> = samples.iter().map(|s| s.x.clone()).collect();
    let assignment = match_reconstructions(&originals, &targets, &out.inputs, &out.targets)?;
    let to_image = |px: &Vec<f64>| GrayImage::new(IMAGE_SIDE, IMAGE_SIDE, px.clone());
    let originals: Vec<GrayImage> = originals.iter().map(to_image).collect::<Result<_>>()?;
    let reconstructions: Vec<GrayImage> = assignment
        .iter()
        .map(|&j| to_image(&out.inputs[j]))
        .collect::<Result<_>>()?;
    let ssim = originals
        .iter()
        .zip(&reconstructions)
        .map(|(a, b)| ssim(a, b))
        .collect::<Result<_>>()?;
    debug_assert!(members.iter().all(|v| comp.contains(v)));
    Ok(InversionTrial {
        m_k,
        variant,
        trial,
        ssim,
        best_loss: out.best_loss,
        originals,
        reconstructions,
        seed,
    })
}

/// The (m_k, variant) pairs a configuration runs. Duplicate labels need at
/// least two members.
pub fn cases(p: &InversionParams) -> Vec<(usize, LabelVariant)> {
    let mut out: Vec<(usize, LabelVariant)> = p.mk_values.iter().map(|&k| (k, LabelVariant::Unique)).collect();
    if p.duplicate_labels {
        out.extend(
            p.mk_values
                .iter()
                .filter(|&&k| k >= 2)
                .map(|&k| (k, LabelVariant::Duplicate)),
        );
    }
    out
}

pub fn rows(p: &InversionParams, master: u64) -> Result<Vec<InversionTrial>> {
    let jobs: Vec<(usize, LabelVariant, usize)> = cases(p)
        .into_iter()
        .flat_map(|(k, v)| (0..p.trials).map(move |t| (k, v, t)))
        .collect();
    jobs.par_iter()
        .map(|&(k, v, t)| trial(p, k, v, t, trial_seed(master, t)))
        .collect()
}

pub(crate) fn run(cfg: &ExperimentConfig, p: &InversionParams) -> Result<ExperimentOutput> {
    let trials = rows(p, cfg.master_seed)?;
    let mut table = Table::new("inversion", &COLUMNS);
    let mut files = Vec::new();
    for t in &trials {
        let min = t.ssim.iter().copied().fold(f64::INFINITY, f64::min);
        let max = t.ssim.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        table.push(vec![
            t.m_k.to_string(),
            t.variant.name().to_string(),
            t.trial.to_string(),
            t.mean_ssim().to_string(),
            min.to_string(),
            max.to_string(),
            t.best_loss.to_string(),
            t.seed.to_string(),
        ]);
        if t.trial < p.image_pairs {
            for (j, (o, r)) in t.originals.iter().zip(&t.reconstructions).enumerate() {
                let stem = format!("images/mk{}_{}_t{}_s{j}", t.m_k, t.variant.name(), t.trial);
                files.push((format!("{stem}_orig.pgm"), o.to_pgm()));
                files.push((format!("{stem}_recon.pgm"), r.to_pgm()));
            }
        }
    }
    let summary = summarize(&table, &["m_k", "variant"], &["ssim_mean"])?;
    let mut st = Table::new("inversion_summary", &SUMMARY_COLUMNS);
    for e in &summary {
        st.push(vec![
            e.group["m_k"].clone(),
            e.group["variant"].clone(),
            e.count.to_string(),
            e.mean.to_string(),
            e.std.to_string(),
        ]);
    }
    let st_csv = st.to_csv();
    let svg = render_svg(
        &st_csv,
        &PlotSpec {
            title: "Inversion quality against component size",
            x: "m_k",
            ys: &["mean_ssim"],
            group: &["variant"],
        },
    )?;
    let seeds = (0..p.trials).map(|t| trial_seed(cfg.master_seed, t)).collect();
    let csv = table.to_csv();
    let record = record(cfg, seeds, vec![table], summary);
    files.splice(
        0..0,
        [
            ("inversion.csv".to_string(), csv),
            ("inversion_summary.csv".to_string(), st_csv),
            ("inversion.svg".to_string(), svg),
            ("run.json".to_string(), run_json(&record)?),
        ],
    );
    Ok(ExperimentOutput { record, files })
}
