//! Minimal multilayer-perceptron autoencoder.
//!
//! The encoder is the function under audit. Every layer computes
//! `activation(W · x + b)` with `W` stored as an `out × in` matrix.

mod io;
mod train;

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{dot_slices, LinalgError, Matrix, Vector};

pub use io::{load_model, read_model, save_model, write_model, ModelFileError};
pub use train::{gradient_check, reconstruction_mse, train, TrainConfig, TrainOutcome};

#[derive(Debug, Error)]
pub enum NnError {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("layer {index}: expected input dimension {expected}, found {found}")]
    LayerChain {
        index: usize,
        expected: usize,
        found: usize,
    },
    #[error("layer dimensions must be positive")]
    ZeroDim,
    #[error("{0} has no layers")]
    NoLayers(&'static str),
    #[error("decoder maps R^{decoder_in} -> R^{decoder_out} but the encoder maps R^{n} -> R^{m}")]
    DecoderShape {
        n: usize,
        m: usize,
        decoder_in: usize,
        decoder_out: usize,
    },
    #[error("unknown activation {tag:?}; valid tags: sigmoid, relu, tanh, identity")]
    UnknownActivation { tag: String },
    #[error("training data is empty")]
    EmptyData,
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
}

/// Largest double strictly below 1.
const BELOW_ONE: f64 = 1.0 - f64::EPSILON / 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActivationKind {
    Sigmoid,
    #[serde(rename = "relu")]
    ReLU,
    Tanh,
    Identity,
}

impl ActivationKind {
    pub const ALL: [ActivationKind; 4] = [
        ActivationKind::Sigmoid,
        ActivationKind::ReLU,
        ActivationKind::Tanh,
        ActivationKind::Identity,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            ActivationKind::Sigmoid => "sigmoid",
            ActivationKind::ReLU => "relu",
            ActivationKind::Tanh => "tanh",
            ActivationKind::Identity => "identity",
        }
    }

    /// True when the activation has no zeros on the real line.
    pub fn is_strictly_positive(self) -> bool {
        matches!(self, ActivationKind::Sigmoid)
    }

    pub fn apply(self, t: f64) -> f64 {
        match self {
            ActivationKind::Sigmoid => sigmoid(t),
            ActivationKind::ReLU => {
                if t > 0.0 {
                    t
                } else {
                    0.0
                }
            }
            ActivationKind::Tanh => t.tanh().clamp(-BELOW_ONE, BELOW_ONE),
            ActivationKind::Identity => t,
        }
    }

    /// Derivative at preactivation `pre`, given `out = apply(pre)`.
    pub fn derivative(self, pre: f64, out: f64) -> f64 {
        match self {
            ActivationKind::Sigmoid => out * (1.0 - out),
            // subgradient 0 at the kink
            ActivationKind::ReLU => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            ActivationKind::Tanh => 1.0 - out * out,
            ActivationKind::Identity => 1.0,
        }
    }
}

/// Logistic function in the overflow-free two-branch form, kept inside (0, 1).
///
/// Below about -745 the exact value underflows and above about 37 it rounds to
/// one; both ends are pinned to the nearest representable interior value so
/// the result is strictly positive for every finite input.
fn sigmoid(t: f64) -> f64 {
    let s = if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    };
    s.clamp(f64::MIN_POSITIVE, BELOW_ONE)
}

pub fn activate(kind: ActivationKind, t: f64) -> f64 {
    kind.apply(t)
}

impl fmt::Display for ActivationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for ActivationKind {
    type Err = NnError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.tag().eq_ignore_ascii_case(s))
            .ok_or_else(|| NnError::UnknownActivation { tag: s.to_owned() })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub in_dim: usize,
    pub out_dim: usize,
    pub activation: ActivationKind,
}

/// Shape of an encoder `R^n -> R^m`; the last layer is the latent layer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct EncoderSpec {
    input_dim: usize,
    layers: Vec<LayerSpec>,
}

impl EncoderSpec {
    pub fn new(input_dim: usize, layers: Vec<LayerSpec>) -> Result<Self, NnError> {
        check_chain(input_dim, &layers)?;
        Ok(Self { input_dim, layers })
    }

    /// One latent layer `n -> m`.
    pub fn single(n: usize, m: usize, latent_activation: ActivationKind) -> Result<Self, NnError> {
        Self::with_hidden(n, &[], m, ActivationKind::Identity, latent_activation)
    }

    /// Hidden widths `hidden` (all using `hidden_activation`) followed by a latent layer of width `m`.
    pub fn with_hidden(
        n: usize,
        hidden: &[usize],
        m: usize,
        hidden_activation: ActivationKind,
        latent_activation: ActivationKind,
    ) -> Result<Self, NnError> {
        let mut layers = Vec::with_capacity(hidden.len() + 1);
        let mut prev = n;
        for &h in hidden {
            layers.push(LayerSpec {
                in_dim: prev,
                out_dim: h,
                activation: hidden_activation,
            });
            prev = h;
        }
        layers.push(LayerSpec {
            in_dim: prev,
            out_dim: m,
            activation: latent_activation,
        });
        Self::new(n, layers)
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn latent_dim(&self) -> usize {
        self.layers.last().map_or(self.input_dim, |l| l.out_dim)
    }

    pub fn latent_activation(&self) -> ActivationKind {
        self.layers
            .last()
            .map_or(ActivationKind::Identity, |l| l.activation)
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }
}

fn check_chain(input_dim: usize, layers: &[LayerSpec]) -> Result<(), NnError> {
    if layers.is_empty() {
        return Err(NnError::NoLayers("encoder"));
    }
    let mut prev = input_dim;
    for (index, l) in layers.iter().enumerate() {
        if l.in_dim == 0 || l.out_dim == 0 {
            return Err(NnError::ZeroDim);
        }
        if l.in_dim != prev {
            return Err(NnError::LayerChain {
                index,
                expected: prev,
                found: l.in_dim,
            });
        }
        prev = l.out_dim;
    }
    Ok(())
}

/// Fully connected layer: `activation(weights · x + bias)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    weights: Matrix,
    bias: Vector,
    activation: ActivationKind,
}

impl Dense {
    pub fn new(weights: Matrix, bias: Vector, activation: ActivationKind) -> Result<Self, NnError> {
        if bias.dim() != weights.rows() {
            return Err(LinalgError::DimensionMismatch {
                expected: weights.rows(),
                found: bias.dim(),
            }
            .into());
        }
        Ok(Self {
            weights,
            bias,
            activation,
        })
    }

    /// Seeded Gaussian weights with standard deviation `scale / sqrt(in_dim)`, zero bias.
    fn random(spec: LayerSpec, scale: f64, rng: &mut ChaCha8Rng) -> Self {
        let std = scale / (spec.in_dim as f64).sqrt();
        let entries = (0..spec.in_dim * spec.out_dim)
            .map(|_| std * rng.sample::<f64, _>(StandardNormal))
            .collect();
        Self {
            weights: Matrix::new(spec.out_dim, spec.in_dim, entries)
                .expect("finite gaussian draws"),
            bias: Vector::zeros(spec.out_dim),
            activation: spec.activation,
        }
    }

    pub fn spec(&self) -> LayerSpec {
        LayerSpec {
            in_dim: self.in_dim(),
            out_dim: self.out_dim(),
            activation: self.activation,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weights.rows()
    }

    pub fn weights(&self) -> &Matrix {
        &self.weights
    }

    pub fn bias(&self) -> &Vector {
        &self.bias
    }

    pub fn activation(&self) -> ActivationKind {
        self.activation
    }

    fn param_count(&self) -> usize {
        self.weights.as_slice().len() + self.bias.dim()
    }

    fn preactivation(&self, x: &[f64]) -> Vec<f64> {
        (0..self.out_dim())
            .map(|r| dot_slices(self.weights.row(r), x) + self.bias.as_slice()[r])
            .collect()
    }

    fn forward(&self, x: &[f64]) -> Vec<f64> {
        self.preactivation(x)
            .into_iter()
            .map(|z| self.activation.apply(z))
            .collect()
    }
}

/// Autoencoder with an encoder `R^n -> R^m` and a decoder `R^m -> R^n`.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    encoder: Vec<Dense>,
    decoder: Vec<Dense>,
}

impl MlpModel {
    /// Random initialization with a mirrored decoder.
    ///
    /// Decoder hidden layers reuse the matching encoder hidden activation; the
    /// output layer is `Identity`.
    pub fn init(spec: &EncoderSpec, init_scale: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let encoder: Vec<Dense> = spec
            .layers
            .iter()
            .map(|&l| Dense::random(l, init_scale, &mut rng))
            .collect();
        let decoder = spec
            .layers
            .iter()
            .rev()
            .enumerate()
            .map(|(i, l)| {
                let activation = if i + 1 == spec.layers.len() {
                    ActivationKind::Identity
                } else {
                    spec.layers[spec.layers.len() - 2 - i].activation
                };
                let mirrored = LayerSpec {
                    in_dim: l.out_dim,
                    out_dim: l.in_dim,
                    activation,
                };
                Dense::random(mirrored, init_scale, &mut rng)
            })
            .collect();
        Self { encoder, decoder }
    }

    pub fn from_layers(encoder: Vec<Dense>, decoder: Vec<Dense>) -> Result<Self, NnError> {
        let first = encoder.first().ok_or(NnError::NoLayers("encoder"))?;
        let n = first.in_dim();
        check_chain(n, &encoder.iter().map(Dense::spec).collect::<Vec<_>>())?;
        let m = encoder.last().map(Dense::out_dim).unwrap_or(n);
        let dec_first = decoder.first().ok_or(NnError::NoLayers("decoder"))?;
        check_chain(
            dec_first.in_dim(),
            &decoder.iter().map(Dense::spec).collect::<Vec<_>>(),
        )?;
        let dec_out = decoder.last().map(Dense::out_dim).unwrap_or(0);
        if dec_first.in_dim() != m || dec_out != n {
            return Err(NnError::DecoderShape {
                n,
                m,
                decoder_in: dec_first.in_dim(),
                decoder_out: dec_out,
            });
        }
        Ok(Self { encoder, decoder })
    }

    /// Single-layer encoder `x -> activation(A x + b)` with a zero-initialized
    /// identity-activated decoder. Used for constructed (non-trained) encoders.
    pub fn single_layer(
        weights: Matrix,
        bias: Vector,
        activation: ActivationKind,
    ) -> Result<Self, NnError> {
        let (m, n) = (weights.rows(), weights.cols());
        let enc = Dense::new(weights, bias, activation)?;
        let dec = Dense::new(Matrix::zeros(n, m), Vector::zeros(n), ActivationKind::Identity)?;
        Self::from_layers(vec![enc], vec![dec])
    }

    pub fn input_dim(&self) -> usize {
        self.encoder[0].in_dim()
    }

    pub fn latent_dim(&self) -> usize {
        self.encoder[self.encoder.len() - 1].out_dim()
    }

    pub fn encoder_spec(&self) -> EncoderSpec {
        EncoderSpec {
            input_dim: self.input_dim(),
            layers: self.encoder.iter().map(Dense::spec).collect(),
        }
    }

    pub fn latent_activation(&self) -> ActivationKind {
        self.encoder[self.encoder.len() - 1].activation
    }

    pub fn encoder_layers(&self) -> &[Dense] {
        &self.encoder
    }

    pub fn decoder_layers(&self) -> &[Dense] {
        &self.decoder
    }

    fn layers(&self) -> impl Iterator<Item = &Dense> {
        self.encoder.iter().chain(&self.decoder)
    }

    fn layers_mut(&mut self) -> impl Iterator<Item = &mut Dense> {
        self.encoder.iter_mut().chain(self.decoder.iter_mut())
    }

    pub fn param_count(&self) -> usize {
        self.layers().map(Dense::param_count).sum()
    }

    pub fn params_finite(&self) -> bool {
        self.layers().all(|l| {
            l.weights.as_slice().iter().all(|v| v.is_finite())
                && l.bias.as_slice().iter().all(|v| v.is_finite())
        })
    }

    fn run(layers: &[Dense], x: &Vector, expected: usize) -> Result<Vector, NnError> {
        if x.dim() != expected {
            return Err(LinalgError::DimensionMismatch {
                expected,
                found: x.dim(),
            }
            .into());
        }
        let mut h = x.as_slice().to_vec();
        for layer in layers {
            h = layer.forward(&h);
        }
        Ok(Vector::new(h)?)
    }

    pub fn encode(&self, x: &Vector) -> Result<Vector, NnError> {
        Self::run(&self.encoder, x, self.input_dim())
    }

    pub fn decode(&self, z: &Vector) -> Result<Vector, NnError> {
        Self::run(&self.decoder, z, self.latent_dim())
    }

    pub fn reconstruct(&self, x: &Vector) -> Result<Vector, NnError> {
        self.decode(&self.encode(x)?)
    }

    /// Preactivations of every layer (encoder then decoder) for input `x`.
    pub fn preactivations(&self, x: &Vector) -> Result<Vec<Vec<f64>>, NnError> {
        if x.dim() != self.input_dim() {
            return Err(LinalgError::DimensionMismatch {
                expected: self.input_dim(),
                found: x.dim(),
            }
            .into());
        }
        let mut h = x.as_slice().to_vec();
        let mut out = Vec::new();
        for layer in self.layers() {
            let z = layer.preactivation(&h);
            h = z.iter().map(|&t| layer.activation.apply(t)).collect();
            out.push(z);
        }
        Ok(out)
    }
}
