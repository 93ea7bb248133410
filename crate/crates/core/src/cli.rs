//! Command-line front end: `train`, `audit`, `certify`, `recommend`.
//!
//! Exit codes: 0 success, 1 runtime failure (diverged training, unwritable
//! output), 2 usage or input error, 3 hard property violation found by
//! `audit`, 4 certifier found no witness (tolerance alert).

use std::fs;
use std::path::{Path, PathBuf};

use clap::{ArgAction, Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;
use thiserror::Error;

use crate::encoder::Encoder;
use crate::linalg::{OrthogonalBasis, Vector};
use crate::nn::{self, ActivationKind, EncoderSpec, MlpModel, ModelFileError, NnError, TrainConfig};
use crate::properties::{self, CertificateKind, GaussianSampler, PoolSampler, PropertyError, Tolerances};
use crate::recsys::{self, Dataset, RecsysError};

pub const EXIT_OK: u8 = 0;
pub const EXIT_FAILURE: u8 = 1;
pub const EXIT_USAGE: u8 = 2;
pub const EXIT_VIOLATION: u8 = 3;
pub const EXIT_NONE_FOUND: u8 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("model file: {0}")]
    Model(#[from] ModelFileError),
    #[error("dataset: {0}")]
    Data(#[from] RecsysError),
    #[error("precondition failed: {0}")]
    Property(#[from] PropertyError),
    #[error("invalid configuration: {0}")]
    Config(NnError),
    #[error("training failed: {0}")]
    Train(NnError),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Train(_) | CliError::Io { .. } => EXIT_FAILURE,
            _ => EXIT_USAGE,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "latent-audit", version, about = "Autoencoder recommender with latent-activation audits")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train an autoencoder and write the model plus its loss history.
    Train(TrainArgs),
    /// Audit an encoder's zero image, non-zero preservation and order preservation.
    Audit(AuditArgs),
    /// Construct a counterexample for a dimension-reducing encoder with f(0) = 0.
    Certify(CertifyArgs),
    /// Rank items for every user in raw and latent space and compare.
    Recommend(RecommendArgs),
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Norm at or below which a vector counts as zero (0 = exactly zero).
    #[arg(long, default_value_t = 0.0)]
    pub tau_zero: f64,
    #[arg(long, default_value_t = 1e-9)]
    pub tau_order: f64,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

impl CommonArgs {
    fn tolerances(&self) -> Result<Tolerances, CliError> {
        for (flag, v) in [("--tau-zero", self.tau_zero), ("--tau-order", self.tau_order)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(CliError::Usage(format!("{flag} must be a non-negative number, got {v}")));
            }
        }
        Ok(Tolerances {
            tau_zero: self.tau_zero,
            tau_order: self.tau_order,
        })
    }
}

/// `USERSxITEMSxDIM`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SynthShape {
    pub users: usize,
    pub items: usize,
    pub dim: usize,
}

fn parse_synth(s: &str) -> Result<SynthShape, String> {
    let parts: Vec<&str> = s.split('x').collect();
    let nums = parts
        .iter()
        .map(|p| p.parse::<usize>().ok().filter(|&v| v > 0))
        .collect::<Option<Vec<_>>>();
    match nums.as_deref() {
        Some(&[users, items, dim]) => Ok(SynthShape { users, items, dim }),
        _ => Err(format!("expected USERSxITEMSxDIM with positive integers, got {s:?}")),
    }
}

fn parse_activation(s: &str) -> Result<ActivationKind, String> {
    s.parse().map_err(|e: NnError| e.to_string())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BasisChoice {
    Standard,
    Random,
}

impl BasisChoice {
    fn build(self, n: usize, seed: u64) -> OrthogonalBasis {
        match self {
            BasisChoice::Standard => OrthogonalBasis::standard(n),
            BasisChoice::Random => OrthogonalBasis::random(n, seed),
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Generate a synthetic dataset of shape USERSxITEMSxDIM.
    #[arg(long, value_parser = parse_synth, conflicts_with = "dataset")]
    pub synth: Option<SynthShape>,
    /// Fraction of entries zeroed in the synthetic dataset.
    #[arg(long, default_value_t = 0.0)]
    pub sparsity: f64,
    /// CSV dataset (`kind,id,v0,...`).
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Expected input dimension; checked against the data when both are known.
    #[arg(long)]
    pub input_dim: Option<usize>,
    /// Latent width m.
    #[arg(long)]
    pub latent: usize,
    /// Comma-separated hidden widths between input and latent layer.
    #[arg(long, value_delimiter = ',')]
    pub hidden: Vec<usize>,
    #[arg(long, default_value = "sigmoid", value_parser = parse_activation)]
    pub activation: ActivationKind,
    #[arg(long, default_value = "tanh", value_parser = parse_activation)]
    pub hidden_activation: ActivationKind,
    #[arg(long, default_value_t = 50)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0.05)]
    pub lr: f64,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 1.0)]
    pub init_scale: f64,
    /// Reject latent widths above the input dimension.
    #[arg(long, default_value_t = true, num_args = 0..=1, default_missing_value = "true", action = ArgAction::Set)]
    pub enforce_compression: bool,
}

#[derive(Debug, Clone, Args)]
pub struct AuditArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub model: PathBuf,
    /// Use dataset vectors as audit inputs and as the triple pool.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long, default_value_t = 1000)]
    pub triples: u64,
    /// Number of seeded Gaussian inputs when no dataset is given.
    #[arg(long, default_value_t = 256)]
    pub inputs: usize,
    #[arg(long, value_enum, default_value_t = BasisChoice::Standard)]
    pub basis: BasisChoice,
}

#[derive(Debug, Clone, Args)]
pub struct CertifyArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, value_enum, default_value_t = BasisChoice::Standard)]
    pub basis: BasisChoice,
}

#[derive(Debug, Clone, Args)]
pub struct RecommendArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub k: usize,
}

pub fn run(cli: Cli) -> Result<u8, CliError> {
    match cli.command {
        Command::Train(a) => cmd_train(&a),
        Command::Audit(a) => cmd_audit(&a),
        Command::Certify(a) => cmd_certify(&a),
        Command::Recommend(a) => cmd_recommend(&a),
    }
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|source| CliError::Io {
        path: dir.display().to_string(),
        source,
    })
}

fn write_output(path: &Path, contents: &str) -> Result<(), CliError> {
    crate::write_atomic(path, contents.as_bytes()).map_err(|source| CliError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("reports serialize");
    s.push('\n');
    s
}

pub fn cmd_train(a: &TrainArgs) -> Result<u8, CliError> {
    a.common.tolerances()?;
    let n_hint = a.input_dim.or(a.synth.map(|s| s.dim));
    if a.latent == 0 {
        return Err(CliError::Usage("--latent must be positive".into()));
    }
    if let Some(n) = n_hint {
        if a.enforce_compression && a.latent > n {
            return Err(CliError::Usage(format!(
                "--latent {} exceeds input dimension {n}: an encoder must satisfy m <= n \
                 (pass --enforce-compression=false for control runs)",
                a.latent
            )));
        }
    }
    if !(0.0..1.0).contains(&a.sparsity) {
        return Err(CliError::Usage(format!("--sparsity must lie in [0, 1), got {}", a.sparsity)));
    }
    let cfg = TrainConfig {
        learning_rate: a.lr,
        epochs: a.epochs,
        batch_size: a.batch_size,
        seed: a.common.seed,
        init_scale: a.init_scale,
    };
    cfg.validate().map_err(CliError::Config)?;

    let (dataset, synthetic) = match (&a.synth, &a.dataset) {
        (Some(s), None) => (
            recsys::synth_dataset(s.users, s.items, s.dim, a.sparsity, a.common.seed)?,
            true,
        ),
        (None, Some(path)) => (recsys::load_csv(path)?, false),
        _ => return Err(CliError::Usage("exactly one of --synth or --dataset is required".into())),
    };
    let n = dataset.dim();
    if let Some(expected) = a.input_dim {
        if expected != n {
            return Err(CliError::Usage(format!(
                "--input-dim {expected} does not match the dataset dimension {n}"
            )));
        }
    }
    if a.enforce_compression && a.latent > n {
        return Err(CliError::Usage(format!(
            "--latent {} exceeds input dimension {n}: an encoder must satisfy m <= n",
            a.latent
        )));
    }
    let spec = EncoderSpec::with_hidden(n, &a.hidden, a.latent, a.hidden_activation, a.activation)
        .map_err(|e| CliError::Usage(format!("--hidden: {e}")))?;
    let init = MlpModel::init(&spec, a.init_scale, a.common.seed);
    let outcome = nn::train(&init, &dataset.all_vectors(), &cfg).map_err(CliError::Train)?;

    ensure_dir(&a.common.out_dir)?;
    let model_path = a.common.out_dir.join("model.txt");
    nn::save_model(&outcome.model, &model_path)?;
    let mut loss_csv = String::from("epoch,loss\n");
    for (epoch, loss) in outcome.loss_history.iter().enumerate() {
        loss_csv.push_str(&format!("{epoch},{loss}\n"));
    }
    write_output(&a.common.out_dir.join("loss.csv"), &loss_csv)?;
    if synthetic {
        recsys::save_csv(&dataset, &a.common.out_dir.join("dataset.csv"))?;
    }
    println!(
        "trained {n} -> {} ({}) for {} epochs; final loss {}",
        a.latent,
        a.activation,
        a.epochs,
        outcome
            .loss_history
            .last()
            .map_or_else(|| "n/a".to_string(), |l| l.to_string())
    );
    Ok(EXIT_OK)
}

fn load_dataset_for(model: &MlpModel, path: &Path) -> Result<Dataset, CliError> {
    let ds = recsys::load_csv(path)?;
    if ds.dim() != model.input_dim() {
        return Err(CliError::Usage(format!(
            "dataset dimension {} does not match model input dimension {}",
            ds.dim(),
            model.input_dim()
        )));
    }
    Ok(ds)
}

fn gaussian_inputs(n: usize, count: usize, seed: u64) -> Vec<Vector> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            Vector::new((0..n).map(|_| StandardNormal.sample(&mut rng)).collect())
                .expect("gaussian draws are finite")
        })
        .collect()
}

pub fn cmd_audit(a: &AuditArgs) -> Result<u8, CliError> {
    let tol = a.common.tolerances()?;
    if a.triples == 0 {
        return Err(CliError::Usage("--triples must be positive".into()));
    }
    let model = nn::load_model(&a.model)?;
    let n = model.input_dim();
    let basis = a.basis.build(n, a.common.seed);
    let report = match &a.dataset {
        Some(path) => {
            let ds = load_dataset_for(&model, path)?;
            let inputs = ds.all_vectors();
            let sampler = PoolSampler {
                pool: &inputs,
                seed: a.common.seed,
            };
            properties::audit(&model, &inputs, &sampler, a.triples, &basis, &tol)?
        }
        None => {
            let mut inputs: Vec<Vector> = (0..n).map(|i| Vector::unit(n, i)).collect();
            inputs.extend(gaussian_inputs(n, a.inputs, a.common.seed));
            let sampler = GaussianSampler {
                dim: n,
                seed: a.common.seed,
            };
            properties::audit(&model, &inputs, &sampler, a.triples, &basis, &tol)?
        }
    };
    let json = to_json(&report);
    ensure_dir(&a.common.out_dir)?;
    write_output(&a.common.out_dir.join("audit.json"), &json)?;
    print!("{json}");
    Ok(if report.hard_violation {
        EXIT_VIOLATION
    } else {
        EXIT_OK
    })
}

pub fn cmd_certify(a: &CertifyArgs) -> Result<u8, CliError> {
    let tol = a.common.tolerances()?;
    let model = nn::load_model(&a.model)?;
    let basis = a.basis.build(model.input_dim(), a.common.seed);
    let cert = properties::certify_violation(&model, &basis, &tol)?;
    let json = to_json(&cert);
    ensure_dir(&a.common.out_dir)?;
    write_output(&a.common.out_dir.join("certificate.json"), &json)?;
    print!("{json}");
    if cert.kind == CertificateKind::NoneFound {
        eprintln!("no witness found: tolerances may be too loose for this encoder");
        return Ok(EXIT_NONE_FOUND);
    }
    Ok(EXIT_OK)
}

pub fn cmd_recommend(a: &RecommendArgs) -> Result<u8, CliError> {
    let tol = a.common.tolerances()?;
    let model = nn::load_model(&a.model)?;
    let ds = load_dataset_for(&model, &a.dataset)?;
    if a.k == 0 || a.k > ds.items().len() {
        return Err(CliError::Usage(format!(
            "--k must lie in 1..={}, got {}",
            ds.items().len(),
            a.k
        )));
    }
    let f: &dyn Encoder = &model;
    let recs = recsys::recommend(&ds, f, a.k)?;
    let report = recsys::evaluate_agreement(&ds, f, a.k, &tol)?;

    let mut rankings = String::from("user,space,rank,item,score\n");
    for rec in &recs {
        for (space, r) in [("raw", &rec.raw), ("latent", &rec.latent)] {
            for (rank, (item, score)) in r.ranked_items.iter().enumerate() {
                rankings.push_str(&format!("{},{space},{},{item},{score}\n", r.query_id, rank + 1));
            }
        }
    }
    let mut agreement_csv = String::from("user,tau,overlap\n");
    for u in &report.per_user {
        agreement_csv.push_str(&format!("{},{},{}\n", u.user_id, u.kendall_tau, u.topk_overlap));
    }
    ensure_dir(&a.common.out_dir)?;
    write_output(&a.common.out_dir.join("rankings.csv"), &rankings)?;
    write_output(&a.common.out_dir.join("agreement.csv"), &agreement_csv)?;
    let json = to_json(&report);
    write_output(&a.common.out_dir.join("agreement.json"), &json)?;
    println!(
        "users {}: mean tau {}, mean top-{} overlap {}, collapsed {}",
        report.per_user.len(),
        report.kendall_tau,
        a.k,
        report.topk_overlap,
        report.collapse_flags.len()
    );
    Ok(EXIT_OK)
}
