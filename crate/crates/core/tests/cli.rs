use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use latent_audit::nn::save_model;
use latent_audit::{ActivationKind, Matrix, MlpModel, Vector};
use serde_json::Value;

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_latent-audit")).args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn model_file(dir: &Path, name: &str, weights: Matrix, bias: Vec<f64>, act: ActivationKind) -> PathBuf {
    let path = dir.join(name);
    save_model(&MlpModel::single_layer(weights, Vector::new(bias).unwrap(), act).unwrap(), &path).unwrap();
    path
}

fn hand_example(dir: &Path) -> PathBuf {
    let a = Matrix::from_rows(&[
        Vector::new(vec![1.0, 0.0, 1.0]).unwrap(),
        Vector::new(vec![0.0, 1.0, 1.0]).unwrap(),
    ])
    .unwrap();
    model_file(dir, "hand.txt", a, vec![0.0, 0.0], ActivationKind::Identity)
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn synth(dir: &Path, shape: &str, latent: &str) -> PathBuf {
    let out = dir.join("train");
    let o = bin(&["train", "--synth", shape, "--latent", latent, "--epochs", "3", "--out-dir", s(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    out
}

#[test]
fn train_writes_model_loss_and_dataset() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let o = bin(&["train", "--synth", "30x40x10", "--latent", "3", "--out-dir", s(&out)]);
    assert_eq!(code(&o), 0);
    let loss = fs::read_to_string(out.join("loss.csv")).unwrap();
    let lines: Vec<&str> = loss.lines().collect();
    assert_eq!(lines[0], "epoch,loss");
    assert_eq!(lines.len(), 51);
    assert!(lines[1].starts_with("0,"));
    let model = latent_audit::nn::load_model(&out.join("model.txt")).unwrap();
    assert_eq!((model.input_dim(), model.latent_dim()), (10, 3));
    let ds = latent_audit::recsys::load_csv(&out.join("dataset.csv")).unwrap();
    assert_eq!((ds.users().len(), ds.items().len(), ds.dim()), (30, 40, 10));
}

#[test]
fn zero_epochs_gives_header_only() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let o = bin(&["train", "--synth", "5x5x4", "--latent", "2", "--epochs", "0", "--out-dir", s(&out)]);
    assert_eq!(code(&o), 0);
    assert_eq!(fs::read_to_string(out.join("loss.csv")).unwrap(), "epoch,loss\n");
}

#[test]
fn usage_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let out = s(tmp.path());
    for args in [
        vec!["train", "--synth", "5x5x4", "--latent", "6", "--out-dir", out],
        vec!["train", "--synth", "5x5x4", "--latent", "2", "--activation", "swish", "--out-dir", out],
        vec!["train", "--latent", "2", "--out-dir", out],
        vec!["audit", "--model", "/nonexistent/model.txt", "--out-dir", out],
        vec!["frobnicate"],
    ] {
        let o = bin(&args);
        assert_eq!(code(&o), 2, "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    }
}

#[test]
fn control_runs_may_expand() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let o = bin(&[
        "train", "--synth", "5x5x4", "--latent", "6", "--epochs", "1", "--enforce-compression=false", "--out-dir",
        s(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn divergent_training_exits_1() {
    let tmp = tempfile::tempdir().unwrap();
    let o = bin(&[
        "train", "--synth", "20x20x8", "--latent", "4", "--activation", "identity", "--lr", "1e6", "--out-dir",
        s(tmp.path()),
    ]);
    assert_eq!(code(&o), 1, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("training failed"));
    assert!(!tmp.path().join("model.txt").exists());
}

#[test]
fn certify_hand_example() {
    let tmp = tempfile::tempdir().unwrap();
    let model = hand_example(tmp.path());
    let out = tmp.path().join("cert");
    let o = bin(&["certify", "--model", s(&model), "--out-dir", s(&out)]);
    assert_eq!(code(&o), 0);
    let cert = json(&out.join("certificate.json"));
    assert_eq!(cert["kind"], "OrderViolation");
    assert_eq!(cert["witness_x"], serde_json::json!([1.0, 0.0, 0.0]));
    assert_eq!(cert["witness_u"], serde_json::json!([0.0, 0.0, 1.0]));
    assert_eq!(cert["witness_v"], serde_json::json!([0.0, 0.0, 0.0]));
    assert_eq!(cert["encoded_dots"], serde_json::json!([1.0, 0.0]));
    assert_eq!(cert["margin"], 1.0);
}

#[test]
fn certify_vanishing_basis_vector() {
    let tmp = tempfile::tempdir().unwrap();
    // third input coordinate is ignored, so e3 maps to zero
    let a = Matrix::new(2, 3, vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0]).unwrap();
    let model = model_file(tmp.path(), "trunc.txt", a, vec![0.0, 0.0], ActivationKind::ReLU);
    let out = tmp.path().join("cert");
    assert_eq!(code(&bin(&["certify", "--model", s(&model), "--out-dir", s(&out)])), 0);
    let cert = json(&out.join("certificate.json"));
    assert_eq!(cert["kind"], "NonZeroViolation");
    assert_eq!(cert["witness_x"], serde_json::json!([0.0, 0.0, 1.0]));
}

#[test]
fn certify_preconditions_and_none_found() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("cert");
    let sig = model_file(tmp.path(), "sig.txt", Matrix::zeros(2, 4), vec![0.0; 2], ActivationKind::Sigmoid);
    let o = bin(&["certify", "--model", s(&sig), "--out-dir", s(&out)]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("f(0) is not zero"));

    let wide = model_file(tmp.path(), "wide.txt", Matrix::zeros(4, 3), vec![0.0; 4], ActivationKind::Identity);
    let o = bin(&["certify", "--model", s(&wide), "--out-dir", s(&out)]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("theorem inapplicable"));

    let hand = hand_example(tmp.path());
    let o = bin(&["certify", "--model", s(&hand), "--tau-order", "10", "--out-dir", s(&out)]);
    assert_eq!(code(&o), 4);
    assert_eq!(json(&out.join("certificate.json"))["kind"], "NoneFound");
}

#[test]
fn audit_flags_vanishing_zero_image() {
    let tmp = tempfile::tempdir().unwrap();
    let relu = model_file(tmp.path(), "relu.txt", Matrix::zeros(2, 4), vec![-1.0; 2], ActivationKind::ReLU);
    let out = tmp.path().join("audit");
    let o = bin(&["audit", "--model", s(&relu), "--triples", "50", "--inputs", "20", "--out-dir", s(&out)]);
    assert_eq!(code(&o), 3);
    let report = json(&out.join("audit.json"));
    assert_eq!(report["hard_violation"], true);
    assert_eq!(report["zero_image"]["is_zero"], true);
    assert_eq!(serde_json::from_slice::<Value>(&o.stdout).unwrap(), report);

    let sig = model_file(tmp.path(), "sig.txt", Matrix::zeros(2, 4), vec![-50.0; 2], ActivationKind::Sigmoid);
    let o = bin(&["audit", "--model", s(&sig), "--triples", "50", "--inputs", "20", "--out-dir", s(&out)]);
    assert_eq!(code(&o), 0);
    let report = json(&out.join("audit.json"));
    assert_eq!(report["zero_image"]["is_zero"], false);
    assert_eq!(report["lemma1_rank"]["basis_dim"], 4);
}

#[test]
fn recommend_identity_and_constant_models() {
    let tmp = tempfile::tempdir().unwrap();
    let train = synth(tmp.path(), "12x30x6", "3");
    let dataset = train.join("dataset.csv");

    let ident = model_file(tmp.path(), "id.txt", Matrix::identity(6), vec![0.0; 6], ActivationKind::Identity);
    let out = tmp.path().join("id");
    let o = bin(&["recommend", "--model", s(&ident), "--dataset", s(&dataset), "--k", "5", "--out-dir", s(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let report = json(&out.join("agreement.json"));
    assert_eq!(report["kendall_tau"], 1.0);
    assert_eq!(report["topk_overlap"], 1.0);
    assert_eq!(report["collapse_flags"], serde_json::json!([]));
    let rankings = fs::read_to_string(out.join("rankings.csv")).unwrap();
    assert_eq!(rankings.lines().next(), Some("user,space,rank,item,score"));
    assert_eq!(rankings.lines().count(), 1 + 12 * 2 * 5);
    let agreement = fs::read_to_string(out.join("agreement.csv")).unwrap();
    assert_eq!(agreement.lines().count(), 13);

    let constant = model_file(tmp.path(), "c.txt", Matrix::zeros(3, 6), vec![0.0; 3], ActivationKind::Sigmoid);
    let out = tmp.path().join("c");
    let o = bin(&["recommend", "--model", s(&constant), "--dataset", s(&dataset), "--k", "5", "--out-dir", s(&out)]);
    assert_eq!(code(&o), 0);
    assert_eq!(json(&out.join("agreement.json"))["collapse_flags"].as_array().unwrap().len(), 12);

    let o = bin(&["recommend", "--model", s(&ident), "--dataset", s(&dataset), "--k", "31", "--out-dir", s(&out)]);
    assert_eq!(code(&o), 2);
}

#[test]
fn train_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let a = synth(&tmp.path().join("a"), "10x10x6", "2");
    let b = synth(&tmp.path().join("b"), "10x10x6", "2");
    for f in ["model.txt", "loss.csv", "dataset.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}
