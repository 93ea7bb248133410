//! The encoder abstraction shared by the audits and the recommender.

use crate::linalg::{LinalgError, Matrix, Vector};
use crate::nn::{MlpModel, NnError};

/// A function `R^n -> R^m`.
pub trait Encoder {
    fn input_dim(&self) -> usize;
    fn latent_dim(&self) -> usize;
    fn encode(&self, x: &Vector) -> Result<Vector, NnError>;
}

impl Encoder for MlpModel {
    fn input_dim(&self) -> usize {
        MlpModel::input_dim(self)
    }

    fn latent_dim(&self) -> usize {
        MlpModel::latent_dim(self)
    }

    fn encode(&self, x: &Vector) -> Result<Vector, NnError> {
        MlpModel::encode(self, x)
    }
}

impl<E: Encoder + ?Sized> Encoder for &E {
    fn input_dim(&self) -> usize {
        (**self).input_dim()
    }

    fn latent_dim(&self) -> usize {
        (**self).latent_dim()
    }

    fn encode(&self, x: &Vector) -> Result<Vector, NnError> {
        (**self).encode(x)
    }
}

impl<E: Encoder + ?Sized> Encoder for Box<E> {
    fn input_dim(&self) -> usize {
        (**self).input_dim()
    }

    fn latent_dim(&self) -> usize {
        (**self).latent_dim()
    }

    fn encode(&self, x: &Vector) -> Result<Vector, NnError> {
        (**self).encode(x)
    }
}

/// Affine map `x -> A x + b` (`b = 0` unless an offset is given).
#[derive(Debug, Clone, PartialEq)]
pub struct LinearEncoder {
    weights: Matrix,
    offset: Option<Vector>,
}

impl LinearEncoder {
    pub fn new(weights: Matrix) -> Self {
        Self {
            weights,
            offset: None,
        }
    }

    pub fn with_offset(weights: Matrix, offset: Vector) -> Result<Self, LinalgError> {
        if offset.dim() != weights.rows() {
            return Err(LinalgError::DimensionMismatch {
                expected: weights.rows(),
                found: offset.dim(),
            });
        }
        Ok(Self {
            weights,
            offset: Some(offset),
        })
    }

    pub fn identity(n: usize) -> Self {
        Self::new(Matrix::identity(n))
    }

    /// Keeps the first `m` coordinates of `R^n`.
    pub fn truncation(n: usize, m: usize) -> Self {
        assert!(m <= n, "truncation needs m <= n");
        let mut w = vec![0.0; m * n];
        for i in 0..m {
            w[i * n + i] = 1.0;
        }
        Self::new(Matrix::new(m, n, w).expect("positive dims"))
    }

    /// Isometric embedding of `R^n` into `R^m` by zero padding.
    pub fn padding(n: usize, m: usize) -> Self {
        assert!(m >= n, "padding needs m >= n");
        let mut w = vec![0.0; m * n];
        for i in 0..n {
            w[i * n + i] = 1.0;
        }
        Self::new(Matrix::new(m, n, w).expect("positive dims"))
    }

    pub fn weights(&self) -> &Matrix {
        &self.weights
    }
}

impl Encoder for LinearEncoder {
    fn input_dim(&self) -> usize {
        self.weights.cols()
    }

    fn latent_dim(&self) -> usize {
        self.weights.rows()
    }

    fn encode(&self, x: &Vector) -> Result<Vector, NnError> {
        let mut y = self.weights.mul_vec(x.as_slice())?;
        if let Some(b) = &self.offset {
            for (yi, bi) in y.iter_mut().zip(b.as_slice()) {
                *yi += bi;
            }
        }
        Ok(Vector::new(y)?)
    }
}

/// `x -> c` for every `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstantEncoder {
    input_dim: usize,
    value: Vector,
}

impl ConstantEncoder {
    pub fn new(input_dim: usize, value: Vector) -> Self {
        assert!(input_dim >= 1, "input dimension must be positive");
        Self { input_dim, value }
    }
}

impl Encoder for ConstantEncoder {
    fn input_dim(&self) -> usize {
        self.input_dim
    }

    fn latent_dim(&self) -> usize {
        self.value.dim()
    }

    fn encode(&self, x: &Vector) -> Result<Vector, NnError> {
        check_dim(self.input_dim, x)?;
        Ok(self.value.clone())
    }
}

/// Wraps a closure. The closure's output dimension must equal `latent_dim`.
pub struct FnEncoder<F> {
    input_dim: usize,
    latent_dim: usize,
    f: F,
}

impl<F: Fn(&Vector) -> Vector> FnEncoder<F> {
    pub fn new(input_dim: usize, latent_dim: usize, f: F) -> Self {
        Self {
            input_dim,
            latent_dim,
            f,
        }
    }
}

impl<F: Fn(&Vector) -> Vector> Encoder for FnEncoder<F> {
    fn input_dim(&self) -> usize {
        self.input_dim
    }

    fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    fn encode(&self, x: &Vector) -> Result<Vector, NnError> {
        check_dim(self.input_dim, x)?;
        let y = (self.f)(x);
        if y.dim() != self.latent_dim {
            return Err(LinalgError::DimensionMismatch {
                expected: self.latent_dim,
                found: y.dim(),
            }
            .into());
        }
        Ok(y)
    }
}

fn check_dim(expected: usize, x: &Vector) -> Result<(), LinalgError> {
    if x.dim() != expected {
        return Err(LinalgError::DimensionMismatch {
            expected,
            found: x.dim(),
        });
    }
    Ok(())
}
