//! Toy models with hand-derived gradients.
//!
//! `LinearRegression` is `y ≈ w·x` with loss `½(y - w·x)²`. `Mlp` is one
//! sigmoid hidden layer followed by a softmax output, trained with
//! cross-entropy. MLP parameters are laid out flat as `W1 (hidden x inputs),
//! b1, W2 (classes x hidden), b2`, all row-major.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::seed::rng_from_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Architecture {
    LinearRegression {
        inputs: usize,
    },
    Mlp {
        inputs: usize,
        hidden: usize,
        classes: usize,
    },
}

impl Architecture {
    pub fn param_count(&self) -> usize {
        match *self {
            Architecture::LinearRegression { inputs } => inputs,
            Architecture::Mlp {
                inputs,
                hidden,
                classes,
            } => hidden * inputs + hidden + classes * hidden + classes,
        }
    }

    pub fn inputs(&self) -> usize {
        match *self {
            Architecture::LinearRegression { inputs } | Architecture::Mlp { inputs, .. } => inputs,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    Class(usize),
    Value(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    /// Inputs in `[0, 1]`.
    pub x: Vec<f64>,
    pub target: Target,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct LocalDataset {
    pub samples: Vec<Sample>,
}

impl LocalDataset {
    pub fn new(samples: Vec<Sample>) -> Self {
        LocalDataset { samples }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyModel {
    pub architecture: Architecture,
    pub params: Vec<f64>,
    pub step_size: f64,
}

/// Offsets of the MLP parameter blocks.
#[derive(Debug, Clone, Copy)]
pub(crate) struct MlpLayout {
    pub inputs: usize,
    pub hidden: usize,
    pub classes: usize,
}

impl MlpLayout {
    pub fn b1(&self) -> usize {
        self.hidden * self.inputs
    }
    pub fn w2(&self) -> usize {
        self.b1() + self.hidden
    }
    pub fn b2(&self) -> usize {
        self.w2() + self.classes * self.hidden
    }
}

/// Cached forward pass of the MLP for one input.
pub(crate) struct MlpForward {
    pub h: Vec<f64>,
    pub p: Vec<f64>,
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

pub(crate) fn softmax_in_place(z: &mut [f64]) {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    z.iter_mut().for_each(|v| *v /= total);
}

pub(crate) fn mlp_forward(params: &[f64], l: &MlpLayout, x: &[f64]) -> MlpForward {
    let w1 = &params[..l.b1()];
    let b1 = &params[l.b1()..l.w2()];
    let w2 = &params[l.w2()..l.b2()];
    let b2 = &params[l.b2()..];
    let h: Vec<f64> = (0..l.hidden)
        .map(|k| {
            let row = &w1[k * l.inputs..(k + 1) * l.inputs];
            sigmoid(b1[k] + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>())
        })
        .collect();
    let mut p: Vec<f64> = (0..l.classes)
        .map(|c| {
            let row = &w2[c * l.hidden..(c + 1) * l.hidden];
            b2[c] + row.iter().zip(&h).map(|(a, b)| a * b).sum::<f64>()
        })
        .collect();
    softmax_in_place(&mut p);
    MlpForward { h, p }
}

/// Adds `scale * ∇ℓ(x, soft_label)` into `out`. `soft_label` sums to one.
pub(crate) fn mlp_accumulate_gradient(
    params: &[f64],
    l: &MlpLayout,
    x: &[f64],
    soft_label: &[f64],
    scale: f64,
    out: &mut [f64],
) {
    let fwd = mlp_forward(params, l, x);
    let w2 = &params[l.w2()..l.b2()];
    let delta2: Vec<f64> = fwd.p.iter().zip(soft_label).map(|(p, y)| p - y).collect();
    let delta1: Vec<f64> = (0..l.hidden)
        .map(|k| {
            let back: f64 = (0..l.classes).map(|c| w2[c * l.hidden + k] * delta2[c]).sum();
            back * fwd.h[k] * (1.0 - fwd.h[k])
        })
        .collect();
    for k in 0..l.hidden {
        let d = scale * delta1[k];
        let row = &mut out[k * l.inputs..(k + 1) * l.inputs];
        for (o, xi) in row.iter_mut().zip(x) {
            *o += d * xi;
        }
        out[l.b1() + k] += d;
    }
    for c in 0..l.classes {
        let d = scale * delta2[c];
        let base = l.w2() + c * l.hidden;
        for k in 0..l.hidden {
            out[base + k] += d * fwd.h[k];
        }
        out[l.b2() + c] += d;
    }
}

pub(crate) fn one_hot(class: usize, classes: usize) -> Vec<f64> {
    let mut v = vec![0.0; classes];
    v[class] = 1.0;
    v
}

impl ToyModel {
    /// Random initial weights, uniform in `±1/sqrt(fan_in)` per layer.
    pub fn init(architecture: Architecture, step_size: f64, seed: u64) -> Self {
        let mut rng = rng_from_seed(seed);
        let params = match architecture {
            Architecture::LinearRegression { inputs } => {
                let s = 1.0 / (inputs as f64).sqrt();
                (0..inputs).map(|_| rng.random_range(-s..s)).collect()
            }
            Architecture::Mlp {
                inputs,
                hidden,
                classes,
            } => {
                let s1 = 1.0 / (inputs as f64).sqrt();
                let s2 = 1.0 / (hidden as f64).sqrt();
                let mut p = Vec::with_capacity(architecture.param_count());
                p.extend((0..hidden * inputs + hidden).map(|_| rng.random_range(-s1..s1)));
                p.extend((0..classes * hidden + classes).map(|_| rng.random_range(-s2..s2)));
                p
            }
        };
        ToyModel {
            architecture,
            params,
            step_size,
        }
    }

    pub fn with_params(architecture: Architecture, params: Vec<f64>, step_size: f64) -> Result<Self> {
        if params.len() != architecture.param_count() {
            return invalid(format!(
                "expected {} parameters, got {}",
                architecture.param_count(),
                params.len()
            ));
        }
        Ok(ToyModel {
            architecture,
            params,
            step_size,
        })
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub(crate) fn layout(&self) -> Option<MlpLayout> {
        match self.architecture {
            Architecture::Mlp {
                inputs,
                hidden,
                classes,
            } => Some(MlpLayout {
                inputs,
                hidden,
                classes,
            }),
            Architecture::LinearRegression { .. } => None,
        }
    }

    fn check_sample(&self, s: &Sample) -> Result<()> {
        if s.x.len() != self.architecture.inputs() {
            return invalid(format!(
                "input has {} features, model expects {}",
                s.x.len(),
                self.architecture.inputs()
            ));
        }
        match (self.architecture, s.target) {
            (Architecture::LinearRegression { .. }, Target::Value(_)) => Ok(()),
            (Architecture::Mlp { classes, .. }, Target::Class(c)) if c < classes => Ok(()),
            (_, t) => invalid(format!("target {t:?} does not fit {:?}", self.architecture)),
        }
    }

    /// Mean loss over a batch.
    pub fn loss(&self, batch: &[Sample]) -> Result<f64> {
        if batch.is_empty() {
            return invalid("empty batch");
        }
        let mut total = 0.0;
        for s in batch {
            self.check_sample(s)?;
            total += match (self.architecture, s.target) {
                (Architecture::LinearRegression { .. }, Target::Value(y)) => {
                    let r = y - dot(&self.params, &s.x);
                    0.5 * r * r
                }
                (Architecture::Mlp { .. }, Target::Class(c)) => {
                    let l = self.layout().expect("mlp");
                    -mlp_forward(&self.params, &l, &s.x).p[c].ln()
                }
                _ => unreachable!("checked above"),
            };
        }
        Ok(total / batch.len() as f64)
    }

    /// Predicted class, for MLP models.
    pub fn predict(&self, x: &[f64]) -> Option<usize> {
        let l = self.layout()?;
        let p = mlp_forward(&self.params, &l, x).p;
        (0..p.len()).max_by(|&a, &b| p[a].total_cmp(&p[b]))
    }

    pub fn apply_update(&mut self, gradient: &[f64]) {
        for (w, g) in self.params.iter_mut().zip(gradient) {
            *w -= self.step_size * g;
        }
    }
}

/// Exact gradient of the mean batch loss.
pub fn local_gradient(model: &ToyModel, batch: &[Sample]) -> Result<Vec<f64>> {
    if batch.is_empty() {
        return invalid("empty batch");
    }
    let scale = 1.0 / batch.len() as f64;
    let mut g = vec![0.0; model.param_count()];
    for s in batch {
        model.check_sample(s)?;
        match (model.architecture, s.target) {
            (Architecture::LinearRegression { .. }, Target::Value(y)) => {
                let r = dot(&model.params, &s.x) - y;
                for (gi, xi) in g.iter_mut().zip(&s.x) {
                    *gi += scale * r * xi;
                }
            }
            (Architecture::Mlp { classes, .. }, Target::Class(c)) => {
                let l = model.layout().expect("mlp");
                mlp_accumulate_gradient(&model.params, &l, &s.x, &one_hot(c, classes), scale, &mut g);
            }
            _ => unreachable!("checked above"),
        }
    }
    Ok(g)
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mlp() -> Architecture {
        Architecture::Mlp {
            inputs: 5,
            hidden: 4,
            classes: 3,
        }
    }

    #[test]
    fn param_counts() {
        assert_eq!(mlp().param_count(), 20 + 4 + 12 + 3);
        assert_eq!(Architecture::LinearRegression { inputs: 7 }.param_count(), 7);
    }

    #[test]
    fn linear_regression_at_zero_weights() {
        let model = ToyModel::with_params(Architecture::LinearRegression { inputs: 3 }, vec![0.0; 3], 0.1).unwrap();
        let s = Sample {
            x: vec![0.2, 0.5, 1.0],
            target: Target::Value(2.0),
        };
        assert_eq!(local_gradient(&model, &[s]).unwrap(), vec![-0.4, -1.0, -2.0]);
    }

    #[test]
    fn perfect_fit_gives_zero_gradient() {
        let w = vec![0.5, -1.0];
        let model = ToyModel::with_params(Architecture::LinearRegression { inputs: 2 }, w, 0.1).unwrap();
        let s = Sample {
            x: vec![0.4, 0.2],
            target: Target::Value(0.0),
        };
        assert_eq!(model.loss(std::slice::from_ref(&s)).unwrap(), 0.0);
        assert!(local_gradient(&model, &[s]).unwrap().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn batch_and_shape_errors() {
        let model = ToyModel::init(mlp(), 0.1, 1);
        assert!(local_gradient(&model, &[]).is_err());
        let wrong_dim = Sample {
            x: vec![0.0; 4],
            target: Target::Class(0),
        };
        assert!(local_gradient(&model, &[wrong_dim]).is_err());
        let wrong_class = Sample {
            x: vec![0.0; 5],
            target: Target::Class(3),
        };
        assert!(local_gradient(&model, &[wrong_class]).is_err());
        let wrong_kind = Sample {
            x: vec![0.0; 5],
            target: Target::Value(1.0),
        };
        assert!(model.loss(&[wrong_kind]).is_err());
        assert!(ToyModel::with_params(mlp(), vec![0.0; 3], 0.1).is_err());
    }

    #[test]
    fn softmax_probabilities_sum_to_one() {
        let model = ToyModel::init(mlp(), 0.1, 2);
        let l = model.layout().unwrap();
        let f = mlp_forward(&model.params, &l, &[0.1, 0.9, 0.3, 0.0, 1.0]);
        assert!((f.p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(f.h.iter().all(|&h| h > 0.0 && h < 1.0));
        assert!(model.predict(&[0.1, 0.9, 0.3, 0.0, 1.0]).is_some());
    }
}
