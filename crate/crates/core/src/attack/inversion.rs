//! Gradient inversion: fit dummy samples whose summed gradient matches an
//! observed component gradient sum.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::attack::image::ssim_slices;
use crate::attack::model::{
    dot, mlp_accumulate_gradient, mlp_forward, one_hot, softmax_in_place, Architecture, MlpLayout, Target, ToyModel,
};
use crate::error::{invalid, Error, Result};
use crate::seed::{child_seed, rng_from_seed};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InversionConfig {
    pub iters: usize,
    pub lr: f64,
    pub restarts: usize,
    pub seed: u64,
}

impl Default for InversionConfig {
    fn default() -> Self {
        InversionConfig {
            iters: 2000,
            lr: 0.1,
            restarts: 5,
            seed: 0,
        }
    }
}

/// Final learning rate as a fraction of the initial one; the rate decays
/// geometrically over the run.
const LR_FLOOR: f64 = 0.01;

#[derive(Debug, Clone, PartialEq)]
pub enum LabelKnowledge {
    /// One target per dummy sample, in order.
    Known(Vec<Target>),
    /// Labels are optimized jointly with the inputs.
    Unknown,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InversionResult {
    pub inputs: Vec<Vec<f64>>,
    /// Known labels, or the recovered ones (argmax of the soft label).
    pub targets: Vec<Target>,
    /// Matching loss per iteration of the winning restart.
    pub loss_curve: Vec<f64>,
    pub best_loss: f64,
    pub failed_restarts: usize,
}

/// Per-dummy label state while optimizing.
#[derive(Debug, Clone)]
enum LabelState {
    Class(usize),
    /// Logits of a soft class label.
    Logits(Vec<f64>),
    Value(f64),
    /// Free regression target.
    FreeValue(f64),
}

impl LabelState {
    #[cfg(test)]
    fn free_params(&self) -> usize {
        match self {
            LabelState::Logits(l) => l.len(),
            LabelState::FreeValue(_) => 1,
            _ => 0,
        }
    }

    fn soft(&self, classes: usize) -> Vec<f64> {
        match self {
            LabelState::Class(c) => one_hot(*c, classes),
            LabelState::Logits(l) => {
                let mut p = l.clone();
                softmax_in_place(&mut p);
                p
            }
            _ => unreachable!("regression label on a classifier"),
        }
    }

    fn value(&self) -> f64 {
        match self {
            LabelState::Value(y) | LabelState::FreeValue(y) => *y,
            _ => unreachable!("class label on a regression model"),
        }
    }

    fn target(&self) -> Target {
        match self {
            LabelState::Class(c) => Target::Class(*c),
            LabelState::Logits(l) => Target::Class((0..l.len()).max_by(|&a, &b| l[a].total_cmp(&l[b])).unwrap_or(0)),
            LabelState::Value(y) | LabelState::FreeValue(y) => Target::Value(*y),
        }
    }
}

/// Sum over dummies of the parameter gradient.
fn summed_gradient(model: &ToyModel, xs: &[Vec<f64>], labels: &[LabelState]) -> Vec<f64> {
    let mut s = vec![0.0; model.param_count()];
    match model.layout() {
        Some(l) => {
            for (x, y) in xs.iter().zip(labels) {
                mlp_accumulate_gradient(&model.params, &l, x, &y.soft(l.classes), 1.0, &mut s);
            }
        }
        None => {
            for (x, y) in xs.iter().zip(labels) {
                let r = dot(&model.params, x) - y.value();
                for (si, xi) in s.iter_mut().zip(x) {
                    *si += r * xi;
                }
            }
        }
    }
    s
}

/// Gradient of `phi(x, y) = r · ∇θ ℓ(x, y)` with respect to the input and
/// the soft label, for the MLP.
fn mlp_projection_grad(params: &[f64], l: &MlpLayout, x: &[f64], y: &[f64], r: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let (ni, nh, nc) = (l.inputs, l.hidden, l.classes);
    let w1 = &params[..l.b1()];
    let w2 = &params[l.w2()..l.b2()];
    let rw1 = &r[..l.b1()];
    let rb1 = &r[l.b1()..l.w2()];
    let rw2 = &r[l.w2()..l.b2()];
    let rb2 = &r[l.b2()..];
    let fwd = mlp_forward(params, l, x);
    let h = &fwd.h;
    let p = &fwd.p;
    let s1: Vec<f64> = h.iter().map(|v| v * (1.0 - v)).collect();
    let s2: Vec<f64> = h.iter().zip(&s1).map(|(v, d)| d * (1.0 - 2.0 * v)).collect();
    let delta2: Vec<f64> = p.iter().zip(y).map(|(a, b)| a - b).collect();
    let e: Vec<f64> = (0..nh)
        .map(|k| (0..nc).map(|c| w2[c * nh + k] * delta2[c]).sum())
        .collect();
    let delta1: Vec<f64> = e.iter().zip(&s1).map(|(a, b)| a * b).collect();
    let u: Vec<f64> = (0..nh).map(|k| rb1[k] + dot(&rw1[k * ni..(k + 1) * ni], x)).collect();
    let v: Vec<f64> = (0..nc).map(|c| rb2[c] + dot(&rw2[c * nh..(c + 1) * nh], h)).collect();

    // Adjoint of delta2.
    let us: Vec<f64> = u.iter().zip(&s1).map(|(a, b)| a * b).collect();
    let g_delta2: Vec<f64> = (0..nc).map(|c| v[c] + dot(&w2[c * nh..(c + 1) * nh], &us)).collect();
    let pg = dot(p, &g_delta2);
    let z2_bar: Vec<f64> = p.iter().zip(&g_delta2).map(|(pc, g)| pc * (g - pg)).collect();
    let h_bar: Vec<f64> = (0..nh)
        .map(|k| {
            (0..nc)
                .map(|c| rw2[c * nh + k] * delta2[c] + w2[c * nh + k] * z2_bar[c])
                .sum()
        })
        .collect();
    let z1_bar: Vec<f64> = (0..nh).map(|k| h_bar[k] * s1[k] + u[k] * e[k] * s2[k]).collect();
    let mut x_bar = vec![0.0; ni];
    for k in 0..nh {
        let (a, b) = (z1_bar[k], delta1[k]);
        let row = &w1[k * ni..(k + 1) * ni];
        let rrow = &rw1[k * ni..(k + 1) * ni];
        for i in 0..ni {
            x_bar[i] += a * row[i] + b * rrow[i];
        }
    }
    let y_bar = g_delta2.iter().map(|g| -g).collect();
    (x_bar, y_bar)
}

/// Matching loss `‖Σ ∇θ ℓ − target‖²`, with its gradient with respect to
/// every dummy input and every free label parameter.
fn matching_loss_and_grad(
    model: &ToyModel,
    xs: &[Vec<f64>],
    labels: &[LabelState],
    target: &[f64],
) -> (f64, Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let mut r = summed_gradient(model, xs, labels);
    for (ri, t) in r.iter_mut().zip(target) {
        *ri -= t;
    }
    let loss = dot(&r, &r);
    let mut dxs = Vec::with_capacity(xs.len());
    let mut dls = Vec::with_capacity(xs.len());
    for (x, y) in xs.iter().zip(labels) {
        match model.layout() {
            Some(l) => {
                let soft = y.soft(l.classes);
                let (dx, dy) = mlp_projection_grad(&model.params, &l, x, &soft, &r);
                dxs.push(dx.into_iter().map(|v| 2.0 * v).collect());
                dls.push(match y {
                    LabelState::Logits(_) => {
                        let sy = dot(&soft, &dy);
                        soft.iter().zip(&dy).map(|(s, d)| 2.0 * s * (d - sy)).collect()
                    }
                    _ => Vec::new(),
                });
            }
            None => {
                let w = &model.params;
                let rx = dot(&r, x);
                let resid = dot(w, x) - y.value();
                dxs.push(w.iter().zip(&r).map(|(wi, ri)| 2.0 * (wi * rx + resid * ri)).collect());
                dls.push(match y {
                    LabelState::FreeValue(_) => vec![-2.0 * rx],
                    _ => Vec::new(),
                });
            }
        }
    }
    (loss, dxs, dls)
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(len: usize) -> Self {
        Adam {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - Self::B1.powi(self.t);
        let c2 = 1.0 - Self::B2.powi(self.t);
        for (((p, g), m), v) in params.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
            *m = Self::B1 * *m + (1.0 - Self::B1) * g;
            *v = Self::B2 * *v + (1.0 - Self::B2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + Self::EPS);
        }
    }
}

fn flatten(xs: &[Vec<f64>], labels: &[LabelState]) -> Vec<f64> {
    let mut out: Vec<f64> = xs.iter().flatten().copied().collect();
    for l in labels {
        match l {
            LabelState::Logits(v) => out.extend(v),
            LabelState::FreeValue(y) => out.push(*y),
            _ => {}
        }
    }
    out
}

fn unflatten(flat: &[f64], xs: &mut [Vec<f64>], labels: &mut [LabelState]) {
    let mut it = flat.iter().copied();
    for x in xs.iter_mut() {
        for v in x.iter_mut() {
            *v = it.next().expect("length").clamp(0.0, 1.0);
        }
    }
    for l in labels.iter_mut() {
        match l {
            LabelState::Logits(v) => v.iter_mut().for_each(|e| *e = it.next().expect("length")),
            LabelState::FreeValue(y) => *y = it.next().expect("length"),
            _ => {}
        }
    }
}

struct Attempt {
    inputs: Vec<Vec<f64>>,
    labels: Vec<LabelState>,
    best_loss: f64,
    curve: Vec<f64>,
}

fn attempt(
    model: &ToyModel,
    target: &[f64],
    mut labels: Vec<LabelState>,
    cfg: &InversionConfig,
    seed: u64,
) -> Option<Attempt> {
    let mut rng = rng_from_seed(seed);
    let d = model.architecture.inputs();
    let mut xs: Vec<Vec<f64>> = (0..labels.len())
        .map(|_| (0..d).map(|_| rng.random_range(0.0..1.0)).collect())
        .collect();
    for l in labels.iter_mut() {
        match l {
            LabelState::Logits(v) => v.iter_mut().for_each(|e| *e = rng.random_range(-0.1..0.1)),
            LabelState::FreeValue(y) => *y = rng.random_range(-1.0..1.0),
            _ => {}
        }
    }
    let mut flat = flatten(&xs, &labels);
    let mut adam = Adam::new(flat.len());
    let mut curve = Vec::with_capacity(cfg.iters + 1);
    let mut best = (f64::INFINITY, xs.clone(), labels.clone());
    for it in 0..=cfg.iters {
        let (loss, dxs, dls) = matching_loss_and_grad(model, &xs, &labels, target);
        if !loss.is_finite() {
            return None;
        }
        curve.push(loss);
        if loss < best.0 {
            best = (loss, xs.clone(), labels.clone());
        }
        if it == cfg.iters {
            break;
        }
        let mut grad: Vec<f64> = dxs.into_iter().flatten().collect();
        grad.extend(dls.into_iter().flatten());
        let lr = cfg.lr * LR_FLOOR.powf(it as f64 / cfg.iters.max(1) as f64);
        adam.step(&mut flat, &grad, lr);
        unflatten(&flat, &mut xs, &mut labels);
        // Keep the optimizer state in the clamped box.
        flat = flatten(&xs, &labels);
    }
    Some(Attempt {
        inputs: best.1,
        labels: best.2,
        best_loss: best.0,
        curve,
    })
}

/// Runs `cfg.restarts` independent fits and keeps the one with the lowest
/// matching loss. Dummy inputs stay in `[0, 1]`.
pub fn gradient_inversion(
    target: &[f64],
    model: &ToyModel,
    m_k: usize,
    labels: &LabelKnowledge,
    cfg: &InversionConfig,
) -> Result<InversionResult> {
    if target.len() != model.param_count() {
        return invalid(format!(
            "target has {} entries, model has {} parameters",
            target.len(),
            model.param_count()
        ));
    }
    if m_k == 0 {
        return invalid("component size must be at least 1");
    }
    if cfg.restarts == 0 || cfg.lr <= 0.0 || !cfg.lr.is_finite() {
        return invalid("restarts must be >= 1 and lr positive");
    }
    let init: Vec<LabelState> = match (labels, model.architecture) {
        (LabelKnowledge::Known(ts), arch) => {
            if ts.len() != m_k {
                return invalid(format!("{} labels for {m_k} dummies", ts.len()));
            }
            ts.iter()
                .map(|t| match (*t, arch) {
                    (Target::Class(c), Architecture::Mlp { classes, .. }) if c < classes => Ok(LabelState::Class(c)),
                    (Target::Value(y), Architecture::LinearRegression { .. }) => Ok(LabelState::Value(y)),
                    (t, _) => invalid(format!("label {t:?} does not fit the model")),
                })
                .collect::<Result<_>>()?
        }
        (LabelKnowledge::Unknown, Architecture::Mlp { classes, .. }) => {
            vec![LabelState::Logits(vec![0.0; classes]); m_k]
        }
        (LabelKnowledge::Unknown, Architecture::LinearRegression { .. }) => {
            vec![LabelState::FreeValue(0.0); m_k]
        }
    };
    let mut best: Option<Attempt> = None;
    let mut failed = 0;
    for restart in 0..cfg.restarts {
        match attempt(model, target, init.clone(), cfg, child_seed(cfg.seed, restart as u64)) {
            Some(a) => {
                if best.as_ref().is_none_or(|b| a.best_loss < b.best_loss) {
                    best = Some(a);
                }
            }
            None => failed += 1,
        }
    }
    let best =
        best.ok_or_else(|| Error::AttackFailed(format!("all {} restarts hit a non-finite loss", cfg.restarts)))?;
    Ok(InversionResult {
        targets: best.labels.iter().map(LabelState::target).collect(),
        inputs: best.inputs,
        loss_curve: best.curve,
        best_loss: best.best_loss,
        failed_restarts: failed,
    })
}

/// Assignment of reconstructions to originals that maximizes total SSIM,
/// where a reconstruction may only stand in for an original with the same
/// label. Entry `i` is the reconstruction matched to original `i`.
pub fn match_reconstructions(
    originals: &[Vec<f64>],
    original_labels: &[Target],
    recon: &[Vec<f64>],
    recon_labels: &[Target],
) -> Result<Vec<usize>> {
    let m = originals.len();
    if recon.len() != m || original_labels.len() != m || recon_labels.len() != m {
        return invalid("originals and reconstructions must pair up");
    }
    if m > 8 {
        return invalid("matching is exhaustive and limited to 8 samples");
    }
    if originals.iter().chain(recon).any(|v| v.len() != originals[0].len()) {
        return invalid("images differ in size");
    }
    let table: Vec<Vec<f64>> = originals
        .iter()
        .map(|o| recon.iter().map(|r| ssim_slices(o, r)).collect())
        .collect();
    let mut perm: Vec<usize> = (0..m).collect();
    let mut best: Option<(f64, Vec<usize>)> = None;
    for labelled in [true, false] {
        permute(&mut perm, 0, &mut |p| {
            if labelled && !(0..m).all(|i| same_label(original_labels[i], recon_labels[p[i]])) {
                return;
            }
            let total: f64 = (0..m).map(|i| table[i][p[i]]).sum();
            if best.as_ref().is_none_or(|b| total > b.0) {
                best = Some((total, p.to_vec()));
            }
        });
        // Without a label-consistent assignment, fall back to the unrestricted best.
        if best.is_some() {
            break;
        }
    }
    Ok(best.expect("at least one permutation").1)
}

/// Per-original SSIM under [`match_reconstructions`].
pub fn matched_ssim(
    originals: &[Vec<f64>],
    original_labels: &[Target],
    recon: &[Vec<f64>],
    recon_labels: &[Target],
) -> Result<Vec<f64>> {
    let p = match_reconstructions(originals, original_labels, recon, recon_labels)?;
    Ok(p.iter()
        .enumerate()
        .map(|(i, &j)| ssim_slices(&originals[i], &recon[j]))
        .collect())
}

fn same_label(a: Target, b: Target) -> bool {
    match (a, b) {
        (Target::Class(x), Target::Class(y)) => x == y,
        (Target::Value(_), Target::Value(_)) => true,
        _ => false,
    }
}

fn permute(p: &mut Vec<usize>, k: usize, visit: &mut impl FnMut(&[usize])) {
    if k == p.len() {
        visit(p);
        return;
    }
    for i in k..p.len() {
        p.swap(k, i);
        permute(p, k + 1, visit);
        p.swap(k, i);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attack::model::{local_gradient, Sample};

    fn mlp_model(seed: u64) -> ToyModel {
        ToyModel::init(
            Architecture::Mlp {
                inputs: 4,
                hidden: 3,
                classes: 3,
            },
            0.1,
            seed,
        )
    }

    fn fd_check(model: &ToyModel, xs: &[Vec<f64>], labels: &[LabelState], target: &[f64]) {
        let (_, dxs, dls) = matching_loss_and_grad(model, xs, labels, target);
        let h = 1e-5;
        for j in 0..xs.len() {
            for i in 0..xs[j].len() {
                let mut plus = xs.to_vec();
                let mut minus = xs.to_vec();
                plus[j][i] += h;
                minus[j][i] -= h;
                let fd = (matching_loss_and_grad(model, &plus, labels, target).0
                    - matching_loss_and_grad(model, &minus, labels, target).0)
                    / (2.0 * h);
                let an = dxs[j][i];
                assert!(
                    (fd - an).abs() <= 1e-6 * an.abs().max(1e-3),
                    "x[{j}][{i}]: {fd} vs {an}"
                );
            }
            let free = labels[j].free_params();
            for q in 0..free {
                let bump = |delta: f64| {
                    let mut ls = labels.to_vec();
                    match &mut ls[j] {
                        LabelState::Logits(v) => v[q] += delta,
                        LabelState::FreeValue(y) => *y += delta,
                        _ => unreachable!(),
                    }
                    matching_loss_and_grad(model, xs, &ls, target).0
                };
                let fd = (bump(h) - bump(-h)) / (2.0 * h);
                let an = dls[j][q];
                assert!(
                    (fd - an).abs() <= 1e-6 * an.abs().max(1e-3),
                    "label[{j}][{q}]: {fd} vs {an}"
                );
            }
        }
    }

    #[test]
    fn mlp_input_gradient_matches_finite_differences() {
        let model = mlp_model(3);
        let mut rng = rng_from_seed(11);
        let xs: Vec<Vec<f64>> = (0..2)
            .map(|_| (0..4).map(|_| rng.random_range(0.0..1.0)).collect())
            .collect();
        let target: Vec<f64> = (0..model.param_count()).map(|_| rng.random_range(-0.5..0.5)).collect();
        fd_check(&model, &xs, &[LabelState::Class(0), LabelState::Class(2)], &target);
        fd_check(
            &model,
            &xs,
            &[
                LabelState::Logits(vec![0.3, -0.2, 0.1]),
                LabelState::Logits(vec![0.0, 0.5, -1.0]),
            ],
            &target,
        );
    }

    #[test]
    fn linear_input_gradient_matches_finite_differences() {
        let model =
            ToyModel::with_params(Architecture::LinearRegression { inputs: 3 }, vec![0.4, -0.7, 1.1], 0.1).unwrap();
        let xs = vec![vec![0.2, 0.9, 0.5], vec![0.6, 0.1, 0.3]];
        let target = vec![0.3, -0.1, 0.2];
        fd_check(&model, &xs, &[LabelState::Value(1.0), LabelState::Value(-0.5)], &target);
        fd_check(
            &model,
            &xs,
            &[LabelState::FreeValue(0.7), LabelState::FreeValue(0.2)],
            &target,
        );
    }

    #[test]
    fn summed_gradient_matches_local_gradient() {
        let model = mlp_model(5);
        let xs = vec![vec![0.1, 0.2, 0.3, 0.4], vec![0.9, 0.8, 0.7, 0.6]];
        let mut expected = local_gradient(
            &model,
            &[Sample {
                x: xs[0].clone(),
                target: Target::Class(1),
            }],
        )
        .unwrap();
        let g2 = local_gradient(
            &model,
            &[Sample {
                x: xs[1].clone(),
                target: Target::Class(2),
            }],
        )
        .unwrap();
        expected.iter_mut().zip(&g2).for_each(|(a, b)| *a += b);
        let got = summed_gradient(&model, &xs, &[LabelState::Class(1), LabelState::Class(2)]);
        for (a, b) in got.iter().zip(&expected) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn zero_target_reaches_a_stationary_input() {
        let model = ToyModel::with_params(
            Architecture::LinearRegression { inputs: 4 },
            vec![0.5, -0.3, 0.8, 0.2],
            0.1,
        )
        .unwrap();
        let cfg = InversionConfig {
            seed: 7,
            ..InversionConfig::default()
        };
        let out = gradient_inversion(
            &[0.0; 4],
            &model,
            1,
            &LabelKnowledge::Known(vec![Target::Value(0.6)]),
            &cfg,
        )
        .unwrap();
        let g = local_gradient(
            &model,
            &[Sample {
                x: out.inputs[0].clone(),
                target: Target::Value(0.6),
            }],
        )
        .unwrap();
        assert!(dot(&g, &g).sqrt() < 1e-3);
        assert!(out.inputs[0].iter().all(|v| (0.0..=1.0).contains(v)));
        assert_eq!(out.loss_curve.len(), cfg.iters + 1);
    }

    #[test]
    fn argument_errors() {
        let model = mlp_model(1);
        let cfg = InversionConfig::default();
        assert!(gradient_inversion(&[0.0; 3], &model, 1, &LabelKnowledge::Unknown, &cfg).is_err());
        let t = vec![0.0; model.param_count()];
        assert!(gradient_inversion(&t, &model, 0, &LabelKnowledge::Unknown, &cfg).is_err());
        let labels = LabelKnowledge::Known(vec![Target::Class(0)]);
        assert!(gradient_inversion(&t, &model, 2, &labels, &cfg).is_err());
        let labels = LabelKnowledge::Known(vec![Target::Class(5)]);
        assert!(gradient_inversion(&t, &model, 1, &labels, &cfg).is_err());
    }

    #[test]
    fn matching_respects_labels() {
        let a = vec![0.0, 0.5, 1.0, 0.2];
        let b = vec![1.0, 0.1, 0.0, 0.7];
        let labels = [Target::Class(0), Target::Class(1)];
        let same = matched_ssim(
            &[a.clone(), b.clone()],
            &labels,
            &[b.clone(), a.clone()],
            &[Target::Class(1), Target::Class(0)],
        )
        .unwrap();
        assert!(same.iter().all(|s| (s - 1.0).abs() < 1e-12));
        // Labels forbid the swap that would score perfectly.
        let forced = matched_ssim(&[a.clone(), b.clone()], &labels, &[b, a], &labels).unwrap();
        assert!(forced.iter().all(|&s| s < 0.5));
    }
}
