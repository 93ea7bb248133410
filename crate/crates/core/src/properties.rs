//! Audits of the three encoder requirements and the constructive certifier.
//!
//! For `f: R^n -> R^m` the requirements are
//!
//! 1. `m <= n`;
//! 2. `<x,u> <= <x,v>` implies `<f(x),f(u)> <= <f(x),f(v)>`;
//! 3. `x != 0` implies `f(x) != 0`.
//!
//! Taking `x = 0` in (2) squeezes `<f(0), f(u)>` to `|f(0)|^2` for every `u`.
//! Taking `u, v` orthogonal squeezes `<f(u), f(v)>` to the same value. So when
//! `f(0) = 0`, an encoder satisfying (2) and (3) maps an orthogonal basis to
//! `n` mutually orthogonal non-zero vectors, which needs `m >= n`.
//! [`certify_violation`] walks that argument backwards on a concrete encoder
//! with `m < n` and returns the input that breaks it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;
use thiserror::Error;

use crate::encoder::Encoder;
use crate::linalg::{self, dot, norm, LinalgError, Matrix, OrthogonalBasis, Vector};
use crate::nn::NnError;

/// Raw dot products closer than this count as tied.
pub const RAW_TIE_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum PropertyError {
    #[error(transparent)]
    Encode(#[from] NnError),
    #[error("theorem inapplicable: needs m < n, encoder maps R^{n} -> R^{m}")]
    TheoremInapplicable { n: usize, m: usize },
    #[error("f(0) is not zero: |f(0)| = {norm:e} exceeds tau_zero = {tau_zero:e}; see zero_image")]
    ZeroImageNotZero { norm: f64, tau_zero: f64 },
    #[error("basis lives in R^{found} but the encoder takes R^{expected}")]
    BasisDim { expected: usize, found: usize },
    #[error("input {index} has dimension {found}, encoder takes {expected}")]
    InputDim {
        index: usize,
        expected: usize,
        found: usize,
    },
    #[error("at least one input vector is required")]
    EmptyInputs,
    #[error("at least one triple is required")]
    NoTriples,
}

impl From<LinalgError> for PropertyError {
    fn from(e: LinalgError) -> Self {
        PropertyError::Encode(e.into())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Tolerances {
    /// A vector with norm at most this is treated as zero. The default of 0
    /// means exactly zero: a saturated sigmoid output such as `1e-22` still
    /// counts as non-zero.
    pub tau_zero: f64,
    /// Encoded dot products must differ by more than this to count as reversed.
    pub tau_order: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            tau_zero: 0.0,
            tau_order: 1e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ZeroImageReport {
    pub zero_image: Vector,
    pub norm_sq: f64,
    pub is_zero: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CertificateKind {
    NonZeroViolation,
    OrderViolation,
    NoneFound,
}

/// A concrete witness that an encoder breaks requirement 2 or 3.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ViolationCertificate {
    pub kind: CertificateKind,
    pub witness_x: Option<Vector>,
    pub witness_u: Option<Vector>,
    pub witness_v: Option<Vector>,
    /// `(<x,u>, <x,v>)`.
    pub raw_dots: Option<(f64, f64)>,
    /// `(<f(x),f(u)>, <f(x),f(v)>)`.
    pub encoded_dots: Option<(f64, f64)>,
    /// Encoded reversal `<f(x),f(u)> - <f(x),f(v)>` for order violations, `|x|`
    /// for non-zero violations, zero otherwise.
    pub margin: f64,
}

impl ViolationCertificate {
    fn none_found() -> Self {
        Self {
            kind: CertificateKind::NoneFound,
            witness_x: None,
            witness_u: None,
            witness_v: None,
            raw_dots: None,
            encoded_dots: None,
            margin: 0.0,
        }
    }

    fn non_zero(x: Vector) -> Self {
        Self {
            kind: CertificateKind::NonZeroViolation,
            margin: norm(&x),
            witness_x: Some(x),
            witness_u: None,
            witness_v: None,
            raw_dots: None,
            encoded_dots: None,
        }
    }

    /// Re-evaluates the witness with fresh forward passes.
    ///
    /// Order violations must show `<x,u> <= <x,v>` (within [`RAW_TIE_TOL`]) and an
    /// encoded reversal above `tau_order`; non-zero violations must show
    /// `|x| > tau_zero` and `|f(x)| <= tau_zero`. `NoneFound` never verifies.
    pub fn verify<E: Encoder + ?Sized>(&self, f: &E, tol: &Tolerances) -> Result<bool, PropertyError> {
        match self.kind {
            CertificateKind::NoneFound => Ok(false),
            CertificateKind::NonZeroViolation => {
                let Some(x) = &self.witness_x else {
                    return Ok(false);
                };
                Ok(norm(x) > tol.tau_zero && norm(&f.encode(x)?) <= tol.tau_zero)
            }
            CertificateKind::OrderViolation => {
                let (Some(x), Some(u), Some(v)) = (&self.witness_x, &self.witness_u, &self.witness_v)
                else {
                    return Ok(false);
                };
                let raw_ok = dot(x, u)? <= dot(x, v)? + RAW_TIE_TOL;
                let fx = f.encode(x)?;
                let reversal = dot(&fx, &f.encode(u)?)? - dot(&fx, &f.encode(v)?)?;
                Ok(raw_ok && reversal > tol.tau_order)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OrderAuditReport {
    pub triples_tested: u64,
    pub violations: u64,
    pub violation_rate: f64,
    /// Largest encoded reversal seen across all triples (0 when none).
    pub worst_margin: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankReport {
    pub basis_dim: usize,
    pub latent_dim: usize,
    pub encoded_rank: usize,
    /// Coefficients `a` with `sum_i a_i f(b_i) = 0`, present when the encoded
    /// basis is dependent. Scaled so the largest entry has magnitude 1.
    pub dependent_coeffs: Option<Vec<f64>>,
}

/// Seeded source of `(x, u, v)` triples.
///
/// Triple `i` must depend only on the seed and `i`, so audits can be split
/// across workers without changing results.
pub trait TripleSampler {
    fn seed(&self) -> u64;
    fn draw(&self, index: u64) -> [Vector; 3];
}

fn triple_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Standard Gaussian vectors in `R^dim`.
#[derive(Debug, Clone, Copy)]
pub struct GaussianSampler {
    pub dim: usize,
    pub seed: u64,
}

impl TripleSampler for GaussianSampler {
    fn seed(&self) -> u64 {
        self.seed
    }

    fn draw(&self, index: u64) -> [Vector; 3] {
        let mut rng = triple_rng(self.seed, index);
        std::array::from_fn(|_| {
            let v: Vec<f64> = (0..self.dim).map(|_| StandardNormal.sample(&mut rng)).collect();
            Vector::new(v).expect("gaussian draws are finite")
        })
    }
}

/// Draws each member of the triple uniformly from a fixed pool of vectors.
#[derive(Debug, Clone)]
pub struct PoolSampler<'a> {
    pub pool: &'a [Vector],
    pub seed: u64,
}

impl TripleSampler for PoolSampler<'_> {
    fn seed(&self) -> u64 {
        self.seed
    }

    fn draw(&self, index: u64) -> [Vector; 3] {
        use rand::Rng;
        let mut rng = triple_rng(self.seed, index);
        std::array::from_fn(|_| self.pool[rng.random_range(0..self.pool.len())].clone())
    }
}

fn check_inputs<E: Encoder + ?Sized>(f: &E, inputs: &[Vector]) -> Result<(), PropertyError> {
    let n = f.input_dim();
    match inputs.iter().position(|x| x.dim() != n) {
        Some(index) => Err(PropertyError::InputDim {
            index,
            expected: n,
            found: inputs[index].dim(),
        }),
        None => Ok(()),
    }
}

pub fn zero_image<E: Encoder + ?Sized>(f: &E, tol: &Tolerances) -> Result<ZeroImageReport, PropertyError> {
    let image = f.encode(&Vector::zeros(f.input_dim()))?;
    let norm_sq = dot(&image, &image)?;
    Ok(ZeroImageReport {
        is_zero: norm(&image) <= tol.tau_zero,
        norm_sq,
        zero_image: image,
    })
}

/// Every input with norm above `tau_zero` whose image has norm at most `tau_zero`.
pub fn nonzero_preservation_audit<E: Encoder + ?Sized>(
    f: &E,
    inputs: &[Vector],
    tol: &Tolerances,
) -> Result<Vec<ViolationCertificate>, PropertyError> {
    check_inputs(f, inputs)?;
    let mut out = Vec::new();
    for x in inputs {
        if norm(x) > tol.tau_zero && norm(&f.encode(x)?) <= tol.tau_zero {
            out.push(ViolationCertificate::non_zero(x.clone()));
        }
    }
    Ok(out)
}

/// Encoded reversal of one triple, after ordering `u, v` so that `<x,u> <= <x,v>`.
///
/// Raw ties demand encoded equality, so the magnitude of the encoded gap is
/// returned for them.
fn reversal<E: Encoder + ?Sized>(f: &E, [x, u, v]: &[Vector; 3]) -> Result<f64, PropertyError> {
    let (raw_u, raw_v) = (dot(x, u)?, dot(x, v)?);
    let fx = f.encode(x)?;
    let enc_u = dot(&fx, &f.encode(u)?)?;
    let enc_v = dot(&fx, &f.encode(v)?)?;
    Ok(if (raw_u - raw_v).abs() <= RAW_TIE_TOL {
        (enc_u - enc_v).abs()
    } else if raw_u < raw_v {
        enc_u - enc_v
    } else {
        enc_v - enc_u
    })
}

/// Counts sampled triples whose encoded order contradicts the raw order by more than `tau_order`.
pub fn order_preservation_audit<E: Encoder + ?Sized, S: TripleSampler + ?Sized>(
    f: &E,
    sampler: &S,
    triples: u64,
    tol: &Tolerances,
) -> Result<OrderAuditReport, PropertyError> {
    if triples == 0 {
        return Err(PropertyError::NoTriples);
    }
    let mut violations = 0;
    let mut worst = 0.0_f64;
    for i in 0..triples {
        let triple = sampler.draw(i);
        check_inputs(f, &triple)?;
        let r = reversal(f, &triple)?;
        if r > tol.tau_order {
            violations += 1;
        }
        worst = worst.max(r);
    }
    Ok(OrderAuditReport {
        triples_tested: triples,
        violations,
        violation_rate: violations as f64 / triples as f64,
        worst_margin: worst,
        seed: sampler.seed(),
    })
}

/// Constructs a violation for a dimension-reducing encoder with `f(0) = 0`.
///
/// 1. If some basis vector maps to (numerical) zero, that vector breaks
///    non-zero preservation.
/// 2. Otherwise the `n` images in `R^m` cannot be mutually orthogonal. The
///    first pair `(i, j)` in lexicographic order with
///    `|<f(b_i), f(b_j)>| > tau_order` gives `x = b_i` and `(u, v)` equal to
///    `(b_j, 0)` or `(0, b_j)` depending on the sign: raw dots are both zero
///    but the encoded dots differ.
///
/// `NoneFound` is only returned when tolerances are too loose for either scan.
pub fn certify_violation<E: Encoder + ?Sized>(
    f: &E,
    basis: &OrthogonalBasis,
    tol: &Tolerances,
) -> Result<ViolationCertificate, PropertyError> {
    let (n, m) = (f.input_dim(), f.latent_dim());
    if basis.dim() != n {
        return Err(PropertyError::BasisDim {
            expected: n,
            found: basis.dim(),
        });
    }
    if m >= n {
        return Err(PropertyError::TheoremInapplicable { n, m });
    }
    let zero = Vector::zeros(n);
    let f0 = f.encode(&zero)?;
    let f0_norm = norm(&f0);
    if f0_norm > tol.tau_zero {
        return Err(PropertyError::ZeroImageNotZero {
            norm: f0_norm,
            tau_zero: tol.tau_zero,
        });
    }

    let images = basis
        .vectors()
        .iter()
        .map(|b| f.encode(b))
        .collect::<Result<Vec<_>, _>>()?;
    if let Some(i) = images.iter().position(|img| norm(img) <= tol.tau_zero) {
        return Ok(ViolationCertificate::non_zero(basis.vectors()[i].clone()));
    }

    let b = basis.vectors();
    for i in 0..n {
        let fx_f0 = dot(&images[i], &f0)?;
        for j in i + 1..n {
            let d = dot(&images[i], &images[j])?;
            if d.abs() <= tol.tau_order {
                continue;
            }
            let raw_bj = dot(&b[i], &b[j])?;
            let (u, v, raw_dots, encoded_dots) = if d > 0.0 {
                (b[j].clone(), zero.clone(), (raw_bj, 0.0), (d, fx_f0))
            } else {
                (zero.clone(), b[j].clone(), (0.0, raw_bj), (fx_f0, d))
            };
            let margin = encoded_dots.0 - encoded_dots.1;
            if raw_dots.0 <= raw_dots.1 + RAW_TIE_TOL && margin > tol.tau_order {
                return Ok(ViolationCertificate {
                    kind: CertificateKind::OrderViolation,
                    witness_x: Some(b[i].clone()),
                    witness_u: Some(u),
                    witness_v: Some(v),
                    raw_dots: Some(raw_dots),
                    encoded_dots: Some(encoded_dots),
                    margin,
                });
            }
        }
    }
    Ok(ViolationCertificate::none_found())
}

/// Rank of the encoded basis `{f(b_i)}`, with a null combination when it is deficient.
pub fn lemma1_rank_check<E: Encoder + ?Sized>(
    f: &E,
    basis: &OrthogonalBasis,
) -> Result<RankReport, PropertyError> {
    let n = f.input_dim();
    if basis.dim() != n {
        return Err(PropertyError::BasisDim {
            expected: n,
            found: basis.dim(),
        });
    }
    let images = basis
        .vectors()
        .iter()
        .map(|b| f.encode(b))
        .collect::<Result<Vec<_>, _>>()?;
    // columns of the transpose are the images, so its null space holds the a_i
    let columns = Matrix::from_rows(&images)?.transpose();
    let encoded_rank = linalg::rank(&columns, linalg::RANK_TOL);
    let dependent_coeffs = if encoded_rank < n {
        linalg::null_vector(&columns, linalg::RANK_TOL)
    } else {
        None
    };
    Ok(RankReport {
        basis_dim: n,
        latent_dim: f.latent_dim(),
        encoded_rank,
        dependent_coeffs,
    })
}

/// `max_u |<f(0), f(u)> - |f(0)|^2|` over `inputs`.
pub fn hyperplane_check<E: Encoder + ?Sized>(f: &E, inputs: &[Vector]) -> Result<f64, PropertyError> {
    if inputs.is_empty() {
        return Err(PropertyError::EmptyInputs);
    }
    check_inputs(f, inputs)?;
    let f0 = f.encode(&Vector::zeros(f.input_dim()))?;
    let norm_sq = dot(&f0, &f0)?;
    let mut worst = 0.0_f64;
    for u in inputs {
        worst = worst.max((dot(&f0, &f.encode(u)?)? - norm_sq).abs());
    }
    Ok(worst)
}

/// Everything the audit subcommand reports for one encoder.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditReport {
    pub input_dim: usize,
    pub latent_dim: usize,
    pub tolerances: Tolerances,
    pub zero_image: ZeroImageReport,
    pub nonzero_preservation: Vec<ViolationCertificate>,
    pub order_preservation: OrderAuditReport,
    pub hyperplane_deviation: f64,
    pub lemma1_rank: RankReport,
    /// `f(0) = 0` with `m < n`, or any vanished non-zero input.
    pub hard_violation: bool,
}

pub fn audit<E: Encoder + ?Sized, S: TripleSampler + ?Sized>(
    f: &E,
    inputs: &[Vector],
    sampler: &S,
    triples: u64,
    basis: &OrthogonalBasis,
    tol: &Tolerances,
) -> Result<AuditReport, PropertyError> {
    let zero = zero_image(f, tol)?;
    let nonzero = nonzero_preservation_audit(f, inputs, tol)?;
    let order = order_preservation_audit(f, sampler, triples, tol)?;
    let hyperplane = hyperplane_check(f, inputs)?;
    let rank = lemma1_rank_check(f, basis)?;
    let hard_violation =
        (zero.is_zero && f.latent_dim() < f.input_dim()) || !nonzero.is_empty();
    Ok(AuditReport {
        input_dim: f.input_dim(),
        latent_dim: f.latent_dim(),
        tolerances: *tol,
        zero_image: zero,
        nonzero_preservation: nonzero,
        order_preservation: order,
        hyperplane_deviation: hyperplane,
        lemma1_rank: rank,
        hard_violation,
    })
}
