//! Backpropagation and plain mini-batch gradient descent on mean squared
//! reconstruction error.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Dense, MlpModel, NnError};
use crate::linalg::{LinalgError, Vector};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Scale used by [`MlpModel::init`]; carried here so one config describes a run.
    pub init_scale: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.05,
            epochs: 50,
            batch_size: 32,
            seed: 0,
            init_scale: 1.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), NnError> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(NnError::Config(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(NnError::Config("batch_size must be positive".into()));
        }
        if !(self.init_scale.is_finite() && self.init_scale > 0.0) {
            return Err(NnError::Config(format!(
                "init_scale must be positive, got {}",
                self.init_scale
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: MlpModel,
    /// Mean per-sample loss of each epoch, measured on each batch before its update.
    pub loss_history: Vec<f64>,
}

struct LayerGrad {
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl LayerGrad {
    fn zeros_like(layer: &Dense) -> Self {
        Self {
            weights: vec![0.0; layer.weights.as_slice().len()],
            bias: vec![0.0; layer.bias.dim()],
        }
    }
}

fn zero_grads(model: &MlpModel) -> Vec<LayerGrad> {
    model.layers().map(LayerGrad::zeros_like).collect()
}

/// Squared error averaged over coordinates.
fn sample_loss(model: &MlpModel, x: &[f64]) -> f64 {
    let mut h = x.to_vec();
    for layer in model.layers() {
        h = layer.forward(&h);
    }
    squared_error(&h, x)
}

fn squared_error(y: &[f64], target: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (a, b) in y.iter().zip(target) {
        let d = a - b;
        acc += d * d;
    }
    acc / target.len() as f64
}

/// Forward and backward pass for one sample; adds `scale * dL/dθ` into `grads`
/// and returns the sample loss.
fn accumulate_gradient(model: &MlpModel, x: &[f64], scale: f64, grads: &mut [LayerGrad]) -> f64 {
    let layers: Vec<&Dense> = model.layers().collect();
    let mut inputs: Vec<Vec<f64>> = Vec::with_capacity(layers.len());
    let mut pres: Vec<Vec<f64>> = Vec::with_capacity(layers.len());
    let mut h = x.to_vec();
    for layer in &layers {
        let z = layer.preactivation(&h);
        let a: Vec<f64> = z.iter().map(|&t| layer.activation.apply(t)).collect();
        inputs.push(std::mem::replace(&mut h, a));
        pres.push(z);
    }
    let output = h;
    let loss = squared_error(&output, x);

    let n = x.len() as f64;
    let mut upstream: Vec<f64> = output
        .iter()
        .zip(x)
        .map(|(y, t)| 2.0 * (y - t) / n)
        .collect();
    let mut out = output;
    for (l, layer) in layers.iter().enumerate().rev() {
        let delta: Vec<f64> = upstream
            .iter()
            .zip(&pres[l])
            .zip(&out)
            .map(|((g, &z), &a)| g * layer.activation.derivative(z, a))
            .collect();
        let grad = &mut grads[l];
        let in_dim = layer.in_dim();
        for (r, &d) in delta.iter().enumerate() {
            grad.bias[r] += scale * d;
            let row = &mut grad.weights[r * in_dim..(r + 1) * in_dim];
            for (w, &inp) in row.iter_mut().zip(&inputs[l]) {
                *w += scale * d * inp;
            }
        }
        if l > 0 {
            let mut next = vec![0.0; in_dim];
            for (r, &d) in delta.iter().enumerate() {
                for (acc, &w) in next.iter_mut().zip(layer.weights.row(r)) {
                    *acc += w * d;
                }
            }
            upstream = next;
            out = inputs[l].clone();
        }
    }
    loss
}

fn check_data(model: &MlpModel, data: &[Vector]) -> Result<(), NnError> {
    if data.is_empty() {
        return Err(NnError::EmptyData);
    }
    let n = model.input_dim();
    if let Some(bad) = data.iter().find(|v| v.dim() != n) {
        return Err(LinalgError::DimensionMismatch {
            expected: n,
            found: bad.dim(),
        }
        .into());
    }
    Ok(())
}

/// Mean reconstruction error of `model` over `data`.
pub fn reconstruction_mse(model: &MlpModel, data: &[Vector]) -> Result<f64, NnError> {
    check_data(model, data)?;
    let total: f64 = data.iter().map(|x| sample_loss(model, x.as_slice())).sum();
    Ok(total / data.len() as f64)
}

/// Mini-batch gradient descent on a private copy of `model`.
///
/// Samples are reshuffled every epoch from a generator seeded with `cfg.seed`.
pub fn train(model: &MlpModel, data: &[Vector], cfg: &TrainConfig) -> Result<TrainOutcome, NnError> {
    cfg.validate()?;
    check_data(model, data)?;
    let mut model = model.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for (batch, idx) in order.chunks(cfg.batch_size).enumerate() {
            let mut grads = zero_grads(&model);
            let scale = 1.0 / idx.len() as f64;
            let mut batch_loss = 0.0;
            for &i in idx {
                batch_loss += accumulate_gradient(&model, data[i].as_slice(), scale, &mut grads);
            }
            if !batch_loss.is_finite() {
                return Err(NnError::NonFiniteLoss { epoch, batch });
            }
            epoch_loss += batch_loss;
            for (layer, g) in model.layers_mut().zip(&grads) {
                for (w, gw) in layer.weights.as_mut_slice().iter_mut().zip(&g.weights) {
                    *w -= cfg.learning_rate * gw;
                }
                for (b, gb) in layer.bias.as_mut_slice().iter_mut().zip(&g.bias) {
                    *b -= cfg.learning_rate * gb;
                }
            }
            if !model.params_finite() {
                return Err(NnError::NonFiniteLoss { epoch, batch });
            }
        }
        history.push(epoch_loss / data.len() as f64);
    }
    Ok(TrainOutcome {
        model,
        loss_history: history,
    })
}

fn param_mut(model: &mut MlpModel, mut index: usize) -> &mut f64 {
    for layer in model.layers_mut() {
        let nw = layer.weights.as_slice().len();
        if index < nw {
            return &mut layer.weights.as_mut_slice()[index];
        }
        index -= nw;
        let nb = layer.bias.dim();
        if index < nb {
            return &mut layer.bias.as_mut_slice()[index];
        }
        index -= nb;
    }
    panic!("parameter index out of range");
}

/// Largest relative discrepancy between backprop gradients and central finite
/// differences of the reconstruction loss at `x`.
///
/// Relative error per parameter is `|g_a - g_fd| / max(1, |g_a| + |g_fd|)`.
pub fn gradient_check(model: &MlpModel, x: &Vector, epsilon: f64) -> Result<f64, NnError> {
    if !(1e-7..=1e-3).contains(&epsilon) {
        return Err(NnError::Config(format!(
            "epsilon must lie in [1e-7, 1e-3], got {epsilon}"
        )));
    }
    check_data(model, std::slice::from_ref(x))?;
    let mut grads = zero_grads(model);
    accumulate_gradient(model, x.as_slice(), 1.0, &mut grads);
    let analytic: Vec<f64> = grads
        .iter()
        .flat_map(|g| g.weights.iter().chain(&g.bias).copied())
        .collect();

    let mut probe = model.clone();
    let mut worst = 0.0_f64;
    for (i, &ga) in analytic.iter().enumerate() {
        let original = *param_mut(&mut probe, i);
        *param_mut(&mut probe, i) = original + epsilon;
        let plus = sample_loss(&probe, x.as_slice());
        *param_mut(&mut probe, i) = original - epsilon;
        let minus = sample_loss(&probe, x.as_slice());
        *param_mut(&mut probe, i) = original;
        let fd = (plus - minus) / (2.0 * epsilon);
        let rel = (ga - fd).abs() / (ga.abs() + fd.abs()).max(1.0);
        worst = worst.max(rel);
    }
    Ok(worst)
}
