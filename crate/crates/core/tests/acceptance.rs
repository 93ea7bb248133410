//! Acceptance criteria AC1–AC9. Each test prints one `[PASS]`/`[FAIL]` line;
//! run with `--nocapture` to see them.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use latent_audit::linalg::OrthogonalBasis;
use latent_audit::nn::{gradient_check, reconstruction_mse, save_model, train};
use latent_audit::properties::{
    certify_violation, lemma1_rank_check, zero_image, CertificateKind, RAW_TIE_TOL,
};
use latent_audit::recsys::{evaluate_agreement, low_rank_vectors, synth_dataset, top_k, Space};
use latent_audit::{
    dot, norm, ActivationKind, Encoder, EncoderSpec, LinearEncoder, Matrix, MlpModel, TrainConfig, Tolerances,
    Vector,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

// pinned tolerances
const TAU_ORDER: f64 = 1e-9;
const FD_EPSILON: f64 = 1e-5;
const GRAD_REL_ERR: f64 = 1e-4;
const NULL_COMBO_TOL: f64 = 1e-6;
const MSE_REDUCTION: f64 = 0.5;

fn report(id: &str, what: &str, ok: bool, detail: String, elapsed: Duration, budget: Duration) -> bool {
    let in_budget = elapsed <= budget;
    let pass = ok && in_budget;
    println!(
        "[{}] {id} {what}: {detail} ({:.2}s, budget {}s{})",
        if pass { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64(),
        budget.as_secs(),
        if in_budget { "" } else { ", over budget" }
    );
    pass
}

// Runtime budgets are stated for release builds; debug builds get a 10x allowance.
fn budget(secs: u64) -> Duration {
    let scale = if cfg!(debug_assertions) { 10 } else { 1 };
    Duration::from_secs(secs * scale)
}

fn gaussian_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
    let data = (0..rows * cols).map(|_| StandardNormal.sample(rng)).collect();
    Matrix::new(rows, cols, data).unwrap()
}

fn tol() -> Tolerances {
    Tolerances {
        tau_zero: 0.0,
        tau_order: TAU_ORDER,
    }
}

#[test]
fn ac1_certifier_completeness() {
    let start = Instant::now();
    let mut certified = 0;
    let mut verified = 0;
    let mut runs = 0;
    for (n, m) in [(4, 2), (8, 4), (16, 8)] {
        for seed in 0..100u64 {
            runs += 1;
            let mut rng = ChaCha8Rng::seed_from_u64(seed * 1000 + n as u64);
            let f = LinearEncoder::new(gaussian_matrix(m, n, &mut rng));
            let basis = OrthogonalBasis::random(n, seed);
            let cert = certify_violation(&f, &basis, &tol()).unwrap();
            if cert.kind == CertificateKind::NoneFound {
                continue;
            }
            certified += 1;
            let mut ok = cert.verify(&f, &tol()).unwrap();
            if cert.kind == CertificateKind::OrderViolation {
                let (ru, rv) = cert.raw_dots.unwrap();
                let (eu, ev) = cert.encoded_dots.unwrap();
                ok &= ru <= rv + RAW_TIE_TOL && eu - ev > TAU_ORDER && cert.margin > TAU_ORDER;
            }
            verified += usize::from(ok);
        }
    }
    let pass = report(
        "AC1",
        "certifier completeness",
        certified == runs && verified == runs,
        format!("{certified}/{runs} certified, {verified}/{runs} re-verified"),
        start.elapsed(),
        budget(5),
    );
    assert!(pass);
}

#[test]
fn ac2_sigmoid_zero_image_never_vanishes() {
    let start = Instant::now();
    let mut models = vec![
        MlpModel::single_layer(Matrix::zeros(4, 8), Vector::zeros(4), ActivationKind::Sigmoid).unwrap(),
        MlpModel::single_layer(Matrix::zeros(4, 8), Vector::new(vec![-50.0; 4]).unwrap(), ActivationKind::Sigmoid)
            .unwrap(),
    ];
    for seed in 0..98u64 {
        let n = 4 + (seed as usize % 13);
        let m = 1 + seed as usize % n;
        let spec = if seed % 2 == 0 {
            EncoderSpec::single(n, m, ActivationKind::Sigmoid).unwrap()
        } else {
            EncoderSpec::with_hidden(n, &[n], m, ActivationKind::ReLU, ActivationKind::Sigmoid).unwrap()
        };
        models.push(MlpModel::init(&spec, 0.1 + (seed % 7) as f64, seed));
    }
    let mut good = 0;
    for model in &models {
        let r = zero_image(model, &tol()).unwrap();
        if !r.is_zero && r.zero_image.as_slice().iter().all(|&c| c > 0.0 && c < 1.0) {
            good += 1;
        }
    }
    let pass = report(
        "AC2",
        "sigmoid zero image",
        good == models.len(),
        format!("{good}/{} non-zero with coordinates in (0,1)", models.len()),
        start.elapsed(),
        budget(1),
    );
    assert!(pass);
}

#[test]
fn ac3_relu_and_tanh_can_vanish() {
    let start = Instant::now();
    let relu =
        MlpModel::single_layer(Matrix::zeros(3, 6), Vector::new(vec![-1.0; 3]).unwrap(), ActivationKind::ReLU)
            .unwrap();
    let tanh = MlpModel::single_layer(Matrix::zeros(3, 6), Vector::zeros(3), ActivationKind::Tanh).unwrap();
    let zero = Vector::zeros(6);
    let bitwise_zero = |m: &MlpModel| {
        let z = m.encode(&zero).unwrap();
        z.as_slice().iter().all(|c| c.to_bits() == 0) && norm(&z) == 0.0
    };
    let ok = bitwise_zero(&relu) && bitwise_zero(&tanh);
    let pass = report(
        "AC3",
        "relu/tanh zero image",
        ok,
        format!("relu zero: {}, tanh zero: {}", bitwise_zero(&relu), bitwise_zero(&tanh)),
        start.elapsed(),
        budget(1),
    );
    assert!(pass);
}

#[test]
fn ac4_gradient_check() {
    let start = Instant::now();
    let mut worst = 0.0_f64;
    for seed in 0..20u64 {
        let n = [4, 8, 16][seed as usize % 3];
        let (hidden, latent) = match seed % 4 {
            0 => (ActivationKind::Tanh, ActivationKind::Sigmoid),
            1 => (ActivationKind::Sigmoid, ActivationKind::Tanh),
            2 => (ActivationKind::Tanh, ActivationKind::Identity),
            _ => (ActivationKind::Sigmoid, ActivationKind::Sigmoid),
        };
        let spec = EncoderSpec::with_hidden(n, &[n * 3 / 4], n / 2, hidden, latent).unwrap();
        let model = MlpModel::init(&spec, 1.0, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
        let x = Vector::new((0..n).map(|_| StandardNormal.sample(&mut rng)).collect()).unwrap();
        worst = worst.max(gradient_check(&model, &x, FD_EPSILON).unwrap());
    }
    let pass = report(
        "AC4",
        "gradient check",
        worst < GRAD_REL_ERR,
        format!("max relative error {worst:.3e} over 20 models (< {GRAD_REL_ERR:e})"),
        start.elapsed(),
        budget(10),
    );
    assert!(pass);
}

#[test]
fn ac5_identity_retrieval_matches_raw() {
    let start = Instant::now();
    let ds = synth_dataset(1000, 500, 16, 0.0, 5).unwrap();
    let f = LinearEncoder::identity(16);
    let mut mismatches = 0;
    let mut checks = 0;
    for user in ds.users() {
        for k in [1, 5, 20] {
            checks += 1;
            let raw = top_k(user, ds.items(), k, Space::Raw).unwrap();
            let latent = top_k(user, ds.items(), k, Space::Latent(&f)).unwrap();
            let same = raw.item_ids().eq(latent.item_ids()) && raw.ranked_items.len() == k;
            mismatches += usize::from(!same);
        }
    }
    let pass = report(
        "AC5",
        "identity retrieval oracle",
        mismatches == 0,
        format!("{}/{checks} top-k lists identical", checks - mismatches),
        start.elapsed(),
        budget(5),
    );
    assert!(pass);
}

#[test]
fn ac6_rank_collapse_detection() {
    let start = Instant::now();
    let dim = 8;
    let ds = synth_dataset(20, 60, dim, 0.0, 11).unwrap();
    let target = ds.users()[3].clone();
    // I - u u^T / |u|^2 sends the target user to zero
    let u = target.vector.as_slice();
    let uu = dot(&target.vector, &target.vector).unwrap();
    let proj: Vec<f64> = (0..dim * dim)
        .map(|k| {
            let (r, c) = (k / dim, k % dim);
            f64::from(u8::from(r == c)) - u[r] * u[c] / uu
        })
        .collect();
    let f = LinearEncoder::new(Matrix::new(dim, dim, proj).unwrap());
    let collapse = evaluate_agreement(&ds, &f, 10, &tol()).unwrap();
    let latent = top_k(&target, ds.items(), ds.items().len(), Space::Latent(&f)).unwrap();
    let (lo, hi) = latent
        .ranked_items
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (_, s)| (lo.min(*s), hi.max(*s)));
    let flagged = collapse.collapse_flags.contains(&target.id);

    let data = ds.all_vectors();
    let spec = EncoderSpec::single(dim, 4, ActivationKind::Sigmoid).unwrap();
    let cfg = TrainConfig {
        epochs: 50,
        seed: 11,
        ..TrainConfig::default()
    };
    let trained = train(&MlpModel::init(&spec, cfg.init_scale, cfg.seed), &data, &cfg).unwrap().model;
    let healthy = evaluate_agreement(&ds, &trained, 10, &tol()).unwrap();

    let ok = flagged && hi - lo <= TAU_ORDER && healthy.collapse_flags.is_empty();
    let pass = report(
        "AC6",
        "rank collapse detection",
        ok,
        format!(
            "target flagged: {flagged}, latent score span {:.1e}, trained-model flags: {}",
            hi - lo,
            healthy.collapse_flags.len()
        ),
        start.elapsed(),
        budget(30),
    );
    assert!(pass);
}

fn null_combination_norm(f: &dyn Encoder, basis: &OrthogonalBasis, a: &[f64]) -> f64 {
    let mut sum = vec![0.0; f.latent_dim()];
    for (ai, b) in a.iter().zip(basis.vectors()) {
        for (s, c) in sum.iter_mut().zip(f.encode(b).unwrap().as_slice()) {
            *s += ai * c;
        }
    }
    norm(&Vector::new(sum).unwrap())
}

#[test]
fn ac7_encoded_basis_rank() {
    let start = Instant::now();
    let pad = LinearEncoder::padding(3, 5);
    let pad_rank = lemma1_rank_check(&pad, &OrthogonalBasis::standard(3)).unwrap();
    let mut ok = pad_rank.encoded_rank == 3 && pad_rank.dependent_coeffs.is_none();

    let mut worst = 0.0_f64;
    let mut cases = 0;
    for seed in 0..30u64 {
        let n = 3 + seed as usize % 6;
        let m = 1 + seed as usize % (n - 1);
        let basis = OrthogonalBasis::random(n, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let encoders: Vec<Box<dyn Encoder>> = vec![
            Box::new(LinearEncoder::new(gaussian_matrix(m, n, &mut rng))),
            Box::new(MlpModel::init(&EncoderSpec::single(n, m, ActivationKind::Tanh).unwrap(), 1.0, seed)),
            Box::new(MlpModel::init(&EncoderSpec::single(n, m, ActivationKind::Sigmoid).unwrap(), 1.0, seed)),
        ];
        for f in &encoders {
            cases += 1;
            let r = lemma1_rank_check(f.as_ref(), &basis).unwrap();
            match &r.dependent_coeffs {
                Some(a) if r.encoded_rank <= m => {
                    worst = worst.max(null_combination_norm(f.as_ref(), &basis, a));
                }
                _ => ok = false,
            }
        }
    }
    ok &= worst <= NULL_COMBO_TOL;
    let pass = report(
        "AC7",
        "encoded basis rank",
        ok,
        format!(
            "padding rank {}, {cases} compressing encoders, max |sum a_i f(b_i)| {worst:.2e}",
            pad_rank.encoded_rank
        ),
        start.elapsed(),
        budget(1),
    );
    assert!(pass);
}

#[test]
fn ac8_training_halves_mse() {
    let start = Instant::now();
    let data = low_rank_vectors(1000, 32, 4, 0.0, 8).unwrap();
    let spec = EncoderSpec::single(32, 8, ActivationKind::Sigmoid).unwrap();
    let cfg = TrainConfig {
        epochs: 100,
        seed: 8,
        ..TrainConfig::default()
    };
    let initial = MlpModel::init(&spec, cfg.init_scale, cfg.seed);
    let before = reconstruction_mse(&initial, &data).unwrap();
    let after = reconstruction_mse(&train(&initial, &data, &cfg).unwrap().model, &data).unwrap();
    let pass = report(
        "AC8",
        "training sanity",
        after <= (1.0 - MSE_REDUCTION) * before,
        format!("mse {before:.4} -> {after:.4} ({:.1}% reduction)", 100.0 * (1.0 - after / before)),
        start.elapsed(),
        budget(60),
    );
    assert!(pass);
}

fn run_cli(args: &[&str]) -> u8 {
    let status = Command::new(env!("CARGO_BIN_EXE_latent-audit")).args(args).output().unwrap().status;
    status.code().unwrap() as u8
}

fn read_all(dir: &Path, names: &[&str]) -> Vec<Vec<u8>> {
    names.iter().map(|n| std::fs::read(dir.join(n)).unwrap()).collect()
}

#[test]
fn ac9_audit_and_recommend_are_deterministic() {
    let start = Instant::now();
    let tmp = tempfile::tempdir().unwrap();
    let base = tmp.path();
    let train_dir = base.join("train");
    let train_s = train_dir.to_str().unwrap();
    let code = run_cli(&["train", "--synth", "40x80x12", "--latent", "4", "--epochs", "5", "--out-dir", train_s]);
    assert_eq!(code, 0);
    let model = train_dir.join("model.txt");
    let dataset = train_dir.join("dataset.csv");
    // a collapsing constructed model too, so the hard-violation path is covered
    let relu = base.join("relu.txt");
    save_model(
        &MlpModel::single_layer(Matrix::zeros(4, 12), Vector::new(vec![-1.0; 4]).unwrap(), ActivationKind::ReLU)
            .unwrap(),
        &relu,
    )
    .unwrap();

    let mut identical = true;
    for model in [&model, &relu] {
        let mut outputs = Vec::new();
        for run in 0..2 {
            let dir = base.join(format!("{}-{run}", model.file_stem().unwrap().to_str().unwrap()));
            let dir_s = dir.to_str().unwrap();
            let (m, d) = (model.to_str().unwrap(), dataset.to_str().unwrap());
            run_cli(&["audit", "--model", m, "--dataset", d, "--triples", "300", "--out-dir", dir_s]);
            let code = run_cli(&["recommend", "--model", m, "--dataset", d, "--k", "5", "--out-dir", dir_s]);
            assert_eq!(code, 0);
            outputs.push(read_all(&dir, &["audit.json", "rankings.csv", "agreement.csv", "agreement.json"]));
        }
        identical &= outputs[0] == outputs[1];
    }
    let pass = report(
        "AC9",
        "determinism",
        identical,
        format!("audit and recommend outputs byte-identical across runs: {identical}"),
        start.elapsed(),
        budget(10),
    );
    assert!(pass);
}
