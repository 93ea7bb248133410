//! Autoencoder dot-product recommender with an audit harness for the latent
//! activation.
//!
//! An encoder `f: R^n -> R^m` used for dot-product recommendation should
//! reduce dimension (`m <= n`), preserve the ordering of similarities to a
//! fixed query, and map non-zero vectors to non-zero vectors. When `m < n`
//! those requirements force `f(0) != 0`, which an activation with zeros
//! (ReLU, tanh) cannot guarantee and a strictly positive one (sigmoid) always
//! does. [`properties`] audits all three requirements on any [`Encoder`] and,
//! for dimension-reducing encoders with `f(0) = 0`, constructs an explicit
//! counterexample.

pub mod cli;
pub mod encoder;
pub mod linalg;
pub mod nn;
pub mod properties;
pub mod recsys;

use std::io::{self, Write};
use std::path::Path;

pub use encoder::{ConstantEncoder, Encoder, FnEncoder, LinearEncoder};
pub use linalg::{dot, norm, Matrix, OrthogonalBasis, Vector};
pub use nn::{ActivationKind, EncoderSpec, MlpModel, TrainConfig};
pub use properties::Tolerances;

/// Writes `bytes` to a temporary file next to `path`, then renames it into place.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}
