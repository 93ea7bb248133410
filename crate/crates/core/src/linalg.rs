//! Dense vectors and matrices, dot products, orthogonal bases and numerical rank.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Relative tolerance used for orthogonality checks on bases.
pub const ORTHOGONALITY_TOL: f64 = 1e-9;
/// Relative pivot tolerance used by [`rank`] unless the caller overrides it.
pub const RANK_TOL: f64 = 1e-9;
/// Minimum norm for a basis vector to count as non-zero.
pub const MIN_BASIS_NORM: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinalgError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("vector must have at least one entry")]
    Empty,
    #[error("non-finite entry {value} at index {index}")]
    NonFinite { index: usize, value: f64 },
    #[error("matrix shape {rows}x{cols} does not match {len} entries")]
    Shape { rows: usize, cols: usize, len: usize },
    #[error("basis vectors {i} and {j} are not orthogonal (dot {dot:e})")]
    NotOrthogonal { i: usize, j: usize, dot: f64 },
    #[error("basis vector {index} has norm {norm:e}, below {MIN_BASIS_NORM:e}")]
    DegenerateBasisVector { index: usize, norm: f64 },
    #[error("a basis of R^{dim} needs {dim} vectors, found {found}")]
    BasisSize { dim: usize, found: usize },
}

fn check_finite(entries: &[f64]) -> Result<(), LinalgError> {
    match entries.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(LinalgError::NonFinite {
            index,
            value: entries[index],
        }),
        None => Ok(()),
    }
}

/// A non-empty vector of finite reals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Vector(Vec<f64>);

impl Vector {
    pub fn new(entries: Vec<f64>) -> Result<Self, LinalgError> {
        if entries.is_empty() {
            return Err(LinalgError::Empty);
        }
        check_finite(&entries)?;
        Ok(Self(entries))
    }

    /// The zero vector of dimension `dim` (`dim` must be at least 1).
    pub fn zeros(dim: usize) -> Self {
        assert!(dim >= 1, "vector dimension must be positive");
        Self(vec![0.0; dim])
    }

    /// The `index`-th standard basis vector of R^dim.
    pub fn unit(dim: usize, index: usize) -> Self {
        let mut v = Self::zeros(dim);
        v.0[index] = 1.0;
        v
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub(crate) fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&v| v == 0.0)
    }

    /// Multiplies every entry by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self, LinalgError> {
        Self::new(self.0.iter().map(|v| v * factor).collect())
    }
}

impl TryFrom<Vec<f64>> for Vector {
    type Error = LinalgError;

    fn try_from(entries: Vec<f64>) -> Result<Self, Self::Error> {
        Self::new(entries)
    }
}

impl From<Vector> for Vec<f64> {
    fn from(v: Vector) -> Self {
        v.0
    }
}

/// Sequential left-to-right sum of products over two equal-length slices.
pub(crate) fn dot_slices(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

/// Inner product. Summation is strictly left to right so results are reproducible.
pub fn dot(a: &Vector, b: &Vector) -> Result<f64, LinalgError> {
    if a.dim() != b.dim() {
        return Err(LinalgError::DimensionMismatch {
            expected: a.dim(),
            found: b.dim(),
        });
    }
    Ok(dot_slices(&a.0, &b.0))
}

/// Euclidean norm.
///
/// Equals `sqrt(dot(a, a))` whenever the squares neither underflow nor
/// overflow; outside that range the vector is rescaled by its largest entry
/// first, so the result is zero only for the zero vector.
pub fn norm(a: &Vector) -> f64 {
    let scale = a.0.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
    if scale == 0.0 {
        return 0.0;
    }
    if (1e-150..=1e150).contains(&scale) {
        return dot_slices(&a.0, &a.0).sqrt();
    }
    let mut acc = 0.0;
    for v in &a.0 {
        let r = v / scale;
        acc += r * r;
    }
    scale * acc.sqrt()
}

/// Row-major dense matrix of finite reals.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    entries: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, entries: Vec<f64>) -> Result<Self, LinalgError> {
        if rows == 0 || cols == 0 || entries.len() != rows * cols {
            return Err(LinalgError::Shape {
                rows,
                cols,
                len: entries.len(),
            });
        }
        check_finite(&entries)?;
        Ok(Self {
            rows,
            cols,
            entries,
        })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows >= 1 && cols >= 1, "matrix dimensions must be positive");
        Self {
            rows,
            cols,
            entries: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.entries[i * n + i] = 1.0;
        }
        m
    }

    /// Builds a matrix whose rows are the given vectors.
    pub fn from_rows(rows: &[Vector]) -> Result<Self, LinalgError> {
        let first = rows.first().ok_or(LinalgError::Empty)?;
        let cols = first.dim();
        let mut entries = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.dim() != cols {
                return Err(LinalgError::DimensionMismatch {
                    expected: cols,
                    found: r.dim(),
                });
            }
            entries.extend_from_slice(r.as_slice());
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            entries,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.entries[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.entries[r * self.cols..(r + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.entries
    }

    pub(crate) fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.entries
    }

    pub fn transpose(&self) -> Self {
        let mut entries = Vec::with_capacity(self.entries.len());
        for c in 0..self.cols {
            for r in 0..self.rows {
                entries.push(self.get(r, c));
            }
        }
        Self {
            rows: self.cols,
            cols: self.rows,
            entries,
        }
    }

    /// Matrix-vector product `self · x`.
    pub fn mul_vec(&self, x: &[f64]) -> Result<Vec<f64>, LinalgError> {
        if x.len() != self.cols {
            return Err(LinalgError::DimensionMismatch {
                expected: self.cols,
                found: x.len(),
            });
        }
        Ok((0..self.rows).map(|r| dot_slices(self.row(r), x)).collect())
    }
}

/// Reduced row echelon form with partial pivoting.
///
/// Returns the reduced matrix (as rows) and the pivot column of each pivot row.
/// A candidate pivot whose magnitude is at most `tol` times the largest
/// absolute entry of the input is treated as zero.
fn rref(m: &Matrix, tol: f64) -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut a: Vec<Vec<f64>> = (0..m.rows).map(|r| m.row(r).to_vec()).collect();
    let scale = m.entries.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
    let threshold = tol * scale;
    let mut pivots = Vec::new();
    if scale == 0.0 {
        return (a, pivots);
    }
    let mut row = 0;
    for col in 0..m.cols {
        if row == m.rows {
            break;
        }
        let (best, best_abs) = (row..m.rows)
            .map(|r| (r, a[r][col].abs()))
            .fold((row, -1.0), |acc, cur| if cur.1 > acc.1 { cur } else { acc });
        if best_abs <= threshold {
            for r in a.iter_mut().skip(row) {
                r[col] = 0.0;
            }
            continue;
        }
        a.swap(row, best);
        let pivot = a[row][col];
        for v in a[row].iter_mut() {
            *v /= pivot;
        }
        let pivot_row = a[row].clone();
        for (r, other) in a.iter_mut().enumerate() {
            if r == row {
                continue;
            }
            let factor = other[col];
            if factor != 0.0 {
                for (o, p) in other.iter_mut().zip(&pivot_row) {
                    *o -= factor * p;
                }
            }
        }
        pivots.push(col);
        row += 1;
    }
    (a, pivots)
}

/// Numerical rank via row reduction with partial pivoting.
pub fn rank(m: &Matrix, tol: f64) -> usize {
    rref(m, tol).1.len()
}

/// A non-trivial solution of `m · x = 0`, if the columns of `m` are dependent.
///
/// The first free column is set to 1 and the pivot variables follow by
/// back-substitution. The result is scaled so its largest entry is 1 in
/// magnitude.
pub fn null_vector(m: &Matrix, tol: f64) -> Option<Vec<f64>> {
    let (reduced, pivots) = rref(m, tol);
    let free = (0..m.cols).find(|c| !pivots.contains(c))?;
    let mut x = vec![0.0; m.cols];
    x[free] = 1.0;
    for (r, &pc) in pivots.iter().enumerate() {
        x[pc] = -reduced[r][free];
    }
    let largest = x.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
    for v in &mut x {
        *v /= largest;
    }
    Some(x)
}

/// A set of `n` pairwise orthogonal, non-zero vectors in R^n.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OrthogonalBasis {
    vectors: Vec<Vector>,
}

impl OrthogonalBasis {
    /// Validates pairwise orthogonality (relative to the product of norms) and non-degeneracy.
    pub fn new(vectors: Vec<Vector>) -> Result<Self, LinalgError> {
        let dim = vectors.first().ok_or(LinalgError::Empty)?.dim();
        if vectors.len() != dim {
            return Err(LinalgError::BasisSize {
                dim,
                found: vectors.len(),
            });
        }
        let norms = vectors
            .iter()
            .map(|v| {
                if v.dim() != dim {
                    return Err(LinalgError::DimensionMismatch {
                        expected: dim,
                        found: v.dim(),
                    });
                }
                Ok(norm(v))
            })
            .collect::<Result<Vec<_>, _>>()?;
        if let Some(index) = norms.iter().position(|&n| n < MIN_BASIS_NORM) {
            return Err(LinalgError::DegenerateBasisVector {
                index,
                norm: norms[index],
            });
        }
        for i in 0..dim {
            for j in i + 1..dim {
                let d = dot_slices(vectors[i].as_slice(), vectors[j].as_slice());
                if d.abs() > ORTHOGONALITY_TOL * norms[i] * norms[j] {
                    return Err(LinalgError::NotOrthogonal { i, j, dot: d });
                }
            }
        }
        Ok(Self { vectors })
    }

    /// e_1, ..., e_n.
    pub fn standard(n: usize) -> Self {
        Self {
            vectors: (0..n).map(|i| Vector::unit(n, i)).collect(),
        }
    }

    /// Orthonormal basis from seeded Gaussian draws.
    ///
    /// Modified Gram-Schmidt with one re-orthogonalization pass. A draw whose
    /// residual keeps less than 1e-6 of its original norm is discarded and
    /// redrawn.
    pub fn random(n: usize, seed: u64) -> Self {
        assert!(n >= 1, "basis dimension must be positive");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut basis: Vec<Vec<f64>> = Vec::with_capacity(n);
        while basis.len() < n {
            let mut v: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
            let original = dot_slices(&v, &v).sqrt();
            for _pass in 0..2 {
                for q in &basis {
                    let proj = dot_slices(&v, q);
                    for (vi, qi) in v.iter_mut().zip(q) {
                        *vi -= proj * qi;
                    }
                }
            }
            let residual = dot_slices(&v, &v).sqrt();
            if residual < 1e-6 * original {
                continue;
            }
            for vi in &mut v {
                *vi /= residual;
            }
            basis.push(v);
        }
        Self {
            vectors: basis.into_iter().map(Vector).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.vectors.len()
    }

    pub fn vectors(&self) -> &[Vector] {
        &self.vectors
    }

    pub fn to_matrix(&self) -> Matrix {
        Matrix::from_rows(&self.vectors).expect("basis vectors share one dimension")
    }
}
