//! Line-oriented text format for [`MlpModel`].
//!
//! ```text
//! latent-audit-model v1
//! dims <n> <m>
//! layers <encoder layer count> <decoder layer count>
//! layer encoder <in> <out> <activation>
//! <out lines of <in> weights, row-major>
//! <one line of <out> biases>
//! layer decoder ...
//! ```
//!
//! Reals are written in scientific notation with 17 significant digits, which
//! round-trips every finite `f64` exactly.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use thiserror::Error;

use super::{ActivationKind, Dense, MlpModel, NnError};
use crate::linalg::{Matrix, Vector};

const MAGIC: &str = "latent-audit-model v1";

#[derive(Debug, Error)]
pub enum ModelFileError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: {field}: expected {expected} values, found {found}")]
    Count {
        line: usize,
        field: String,
        expected: usize,
        found: usize,
    },
    #[error("line {line}: unknown activation {tag:?}; valid tags: sigmoid, relu, tanh, identity")]
    UnknownActivation { line: usize, tag: String },
    #[error("unexpected end of file, expected {expected}")]
    Eof { expected: String },
    #[error("invalid model: {0}")]
    Invalid(#[from] NnError),
}

fn fmt_real(v: f64) -> String {
    format!("{v:.16e}")
}

/// Serializes `model` into the text format.
pub fn write_model(model: &MlpModel) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{MAGIC}");
    let _ = writeln!(out, "dims {} {}", model.input_dim(), model.latent_dim());
    let _ = writeln!(
        out,
        "layers {} {}",
        model.encoder.len(),
        model.decoder.len()
    );
    for (part, layers) in [("encoder", &model.encoder), ("decoder", &model.decoder)] {
        for layer in layers.iter() {
            let _ = writeln!(
                out,
                "layer {part} {} {} {}",
                layer.in_dim(),
                layer.out_dim(),
                layer.activation.tag()
            );
            for r in 0..layer.out_dim() {
                let row: Vec<String> = layer.weights.row(r).iter().map(|&v| fmt_real(v)).collect();
                let _ = writeln!(out, "{}", row.join(" "));
            }
            let bias: Vec<String> = layer.bias.as_slice().iter().map(|&v| fmt_real(v)).collect();
            let _ = writeln!(out, "{}", bias.join(" "));
        }
    }
    out
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> Lines<'a> {
    fn next(&mut self, expected: &str) -> Result<(usize, &'a str), ModelFileError> {
        self.inner
            .next()
            .map(|(i, l)| (i + 1, l.trim()))
            .ok_or_else(|| ModelFileError::Eof {
                expected: expected.to_owned(),
            })
    }
}

fn parse_usize(line: usize, token: &str, field: &str) -> Result<usize, ModelFileError> {
    token.parse().map_err(|_| ModelFileError::Parse {
        line,
        message: format!("{field}: expected a non-negative integer, found {token:?}"),
    })
}

fn parse_reals(line: usize, text: &str, field: &str, expected: usize) -> Result<Vec<f64>, ModelFileError> {
    let tokens: Vec<&str> = text.split_whitespace().collect();
    if tokens.len() != expected {
        return Err(ModelFileError::Count {
            line,
            field: field.to_owned(),
            expected,
            found: tokens.len(),
        });
    }
    tokens
        .iter()
        .map(|t| match t.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            _ => Err(ModelFileError::Parse {
                line,
                message: format!("{field}: {t:?} is not a finite real"),
            }),
        })
        .collect()
}

/// Expects `keyword` followed by exactly `count` unsigned integers.
fn header_ints(
    lines: &mut Lines<'_>,
    keyword: &str,
    count: usize,
) -> Result<Vec<usize>, ModelFileError> {
    let (line, text) = lines.next(keyword)?;
    let mut tokens = text.split_whitespace();
    if tokens.next() != Some(keyword) {
        return Err(ModelFileError::Parse {
            line,
            message: format!("expected `{keyword}` header, found {text:?}"),
        });
    }
    let values: Vec<&str> = tokens.collect();
    if values.len() != count {
        return Err(ModelFileError::Count {
            line,
            field: keyword.to_owned(),
            expected: count,
            found: values.len(),
        });
    }
    values
        .iter()
        .map(|t| parse_usize(line, t, keyword))
        .collect()
}

fn read_layer(lines: &mut Lines<'_>, part: &str, index: usize) -> Result<Dense, ModelFileError> {
    let what = format!("{part} layer {index}");
    let (line, text) = lines.next(&what)?;
    let tokens: Vec<&str> = text.split_whitespace().collect();
    if tokens.first() != Some(&"layer") || tokens.get(1) != Some(&part) {
        return Err(ModelFileError::Parse {
            line,
            message: format!("expected `layer {part} <in> <out> <activation>`, found {text:?}"),
        });
    }
    if tokens.len() != 5 {
        return Err(ModelFileError::Count {
            line,
            field: format!("{what} header"),
            expected: 5,
            found: tokens.len(),
        });
    }
    let in_dim = parse_usize(line, tokens[2], "in_dim")?;
    let out_dim = parse_usize(line, tokens[3], "out_dim")?;
    if in_dim == 0 || out_dim == 0 {
        return Err(ModelFileError::Parse {
            line,
            message: format!("{what}: dimensions must be positive"),
        });
    }
    let activation: ActivationKind =
        tokens[4]
            .parse()
            .map_err(|_| ModelFileError::UnknownActivation {
                line,
                tag: tokens[4].to_owned(),
            })?;
    let mut weights = Vec::with_capacity(in_dim * out_dim);
    for r in 0..out_dim {
        let (line, text) = lines.next(&format!("{what} weight row {r}"))?;
        weights.extend(parse_reals(line, text, &format!("{what} weight row {r}"), in_dim)?);
    }
    let (line, text) = lines.next(&format!("{what} bias"))?;
    let bias = parse_reals(line, text, &format!("{what} bias"), out_dim)?;
    let weights = Matrix::new(out_dim, in_dim, weights).map_err(NnError::from)?;
    let bias = Vector::new(bias).map_err(NnError::from)?;
    Ok(Dense::new(weights, bias, activation)?)
}

/// Parses the text format.
pub fn read_model(text: &str) -> Result<MlpModel, ModelFileError> {
    let mut lines = Lines {
        inner: text.lines().enumerate(),
    };
    let (line, magic) = lines.next("format header")?;
    if magic != MAGIC {
        return Err(ModelFileError::Parse {
            line,
            message: format!("expected {MAGIC:?}, found {magic:?}"),
        });
    }
    let dims = header_ints(&mut lines, "dims", 2)?;
    let counts = header_ints(&mut lines, "layers", 2)?;
    let encoder = (0..counts[0])
        .map(|i| read_layer(&mut lines, "encoder", i))
        .collect::<Result<Vec<_>, _>>()?;
    let decoder = (0..counts[1])
        .map(|i| read_layer(&mut lines, "decoder", i))
        .collect::<Result<Vec<_>, _>>()?;
    if let Some((i, extra)) = lines.inner.find(|(_, l)| !l.trim().is_empty()) {
        return Err(ModelFileError::Parse {
            line: i + 1,
            message: format!("unexpected trailing content {extra:?}"),
        });
    }
    let model = MlpModel::from_layers(encoder, decoder)?;
    if model.input_dim() != dims[0] || model.latent_dim() != dims[1] {
        return Err(ModelFileError::Parse {
            line: 2,
            message: format!(
                "dims header says {} -> {}, layers give {} -> {}",
                dims[0],
                dims[1],
                model.input_dim(),
                model.latent_dim()
            ),
        });
    }
    Ok(model)
}

/// Writes `model` to `path` through a temporary file and an atomic rename.
pub fn save_model(model: &MlpModel, path: &Path) -> Result<(), ModelFileError> {
    crate::write_atomic(path, write_model(model).as_bytes()).map_err(|source| ModelFileError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn load_model(path: &Path) -> Result<MlpModel, ModelFileError> {
    let text = fs::read_to_string(path).map_err(|source| ModelFileError::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_model(&text)
}
