//! Dot-product recommendation in raw and latent space, plus agreement metrics.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;
use thiserror::Error;

use crate::encoder::Encoder;
use crate::linalg::{dot_slices, LinalgError, Vector};
use crate::nn::NnError;
use crate::properties::Tolerances;

#[derive(Debug, Error)]
pub enum RecsysError {
    #[error(transparent)]
    Encode(#[from] NnError),
    #[error("item list is empty")]
    NoItems,
    #[error("dataset has no users")]
    NoUsers,
    #[error("k must be at least 1")]
    ZeroK,
    #[error("k = {k} exceeds the {items} available items")]
    KTooLarge { k: usize, items: usize },
    #[error("{kind} {id:?} has dimension {found}, expected {expected}")]
    Dim {
        kind: &'static str,
        id: String,
        expected: usize,
        found: usize,
    },
    #[error("duplicate {kind} id {id:?}")]
    DuplicateId { kind: &'static str, id: String },
    #[error("rankings cover different item sets")]
    ItemSetMismatch,
    #[error("invalid synthetic dataset parameters: {0}")]
    Synth(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("row {row}: {message}")]
    Csv { row: u64, message: String },
}

impl From<LinalgError> for RecsysError {
    fn from(e: LinalgError) -> Self {
        RecsysError::Encode(e.into())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Entry {
    pub id: String,
    pub vector: Vector,
}

impl Entry {
    pub fn new(id: impl Into<String>, vector: Vector) -> Self {
        Self {
            id: id.into(),
            vector,
        }
    }
}

/// User and item vectors sharing one dimension, ids unique per list.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Dataset {
    users: Vec<Entry>,
    items: Vec<Entry>,
}

impl Dataset {
    pub fn new(users: Vec<Entry>, items: Vec<Entry>) -> Result<Self, RecsysError> {
        let dim = users
            .first()
            .ok_or(RecsysError::NoUsers)?
            .vector
            .dim();
        if items.is_empty() {
            return Err(RecsysError::NoItems);
        }
        for (kind, list) in [("user", &users), ("item", &items)] {
            let mut seen = HashSet::new();
            for e in list.iter() {
                if e.vector.dim() != dim {
                    return Err(RecsysError::Dim {
                        kind,
                        id: e.id.clone(),
                        expected: dim,
                        found: e.vector.dim(),
                    });
                }
                if !seen.insert(e.id.as_str()) {
                    return Err(RecsysError::DuplicateId {
                        kind,
                        id: e.id.clone(),
                    });
                }
            }
        }
        Ok(Self { users, items })
    }

    pub fn users(&self) -> &[Entry] {
        &self.users
    }

    pub fn items(&self) -> &[Entry] {
        &self.items
    }

    pub fn dim(&self) -> usize {
        self.users[0].vector.dim()
    }

    /// Every user vector followed by every item vector.
    pub fn all_vectors(&self) -> Vec<Vector> {
        self.users
            .iter()
            .chain(&self.items)
            .map(|e| e.vector.clone())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankingResult {
    pub query_id: String,
    /// Scores non-increasing; equal scores ordered by ascending item id.
    pub ranked_items: Vec<(String, f64)>,
    pub k: usize,
}

impl RankingResult {
    pub fn item_ids(&self) -> impl Iterator<Item = &str> {
        self.ranked_items.iter().map(|(id, _)| id.as_str())
    }
}

/// Where similarities are computed.
#[derive(Clone, Copy)]
pub enum Space<'a> {
    Raw,
    Latent(&'a dyn Encoder),
}

fn rank_scored(query_id: &str, mut scored: Vec<(String, f64)>, k: usize) -> RankingResult {
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    scored.truncate(k);
    RankingResult {
        query_id: query_id.to_owned(),
        ranked_items: scored,
        k,
    }
}

fn encode_entries(f: &dyn Encoder, entries: &[Entry]) -> Result<Vec<Vector>, RecsysError> {
    entries
        .iter()
        .map(|e| f.encode(&e.vector).map_err(RecsysError::from))
        .collect()
}

fn scores(query: &Vector, items: &[Entry], vectors: &[Vector]) -> Result<Vec<(String, f64)>, RecsysError> {
    items
        .iter()
        .zip(vectors)
        .map(|(item, v)| {
            if v.dim() != query.dim() {
                return Err(RecsysError::Dim {
                    kind: "item",
                    id: item.id.clone(),
                    expected: query.dim(),
                    found: v.dim(),
                });
            }
            Ok((item.id.clone(), dot_slices(query.as_slice(), v.as_slice())))
        })
        .collect()
}

/// Exact full-scan top-k by dot product.
pub fn top_k(query: &Entry, items: &[Entry], k: usize, space: Space<'_>) -> Result<RankingResult, RecsysError> {
    if items.is_empty() {
        return Err(RecsysError::NoItems);
    }
    if k == 0 {
        return Err(RecsysError::ZeroK);
    }
    let scored = match space {
        Space::Raw => {
            let raw: Vec<Vector> = items.iter().map(|e| e.vector.clone()).collect();
            scores(&query.vector, items, &raw)?
        }
        Space::Latent(f) => {
            let q = f.encode(&query.vector)?;
            scores(&q, items, &encode_entries(f, items)?)?
        }
    };
    let k = k.min(items.len());
    Ok(rank_scored(&query.id, scored, k))
}

/// Kendall tau-a between two rankings of the same items.
///
/// Pairs tied (exactly equal score) in either ranking count as neither
/// concordant nor discordant; the denominator is always `N(N-1)/2`. Fewer than
/// two items gives 1.
pub fn kendall_tau(r1: &RankingResult, r2: &RankingResult) -> Result<f64, RecsysError> {
    let a: BTreeMap<&str, f64> = r1.ranked_items.iter().map(|(id, s)| (id.as_str(), *s)).collect();
    let b: BTreeMap<&str, f64> = r2.ranked_items.iter().map(|(id, s)| (id.as_str(), *s)).collect();
    if a.len() != r1.ranked_items.len()
        || b.len() != r2.ranked_items.len()
        || a.len() != b.len()
        || !a.keys().eq(b.keys())
    {
        return Err(RecsysError::ItemSetMismatch);
    }
    let pairs: Vec<(f64, f64)> = a.values().zip(b.values()).map(|(&x, &y)| (x, y)).collect();
    let n = pairs.len();
    if n < 2 {
        return Ok(1.0);
    }
    let (mut concordant, mut discordant) = (0i64, 0i64);
    for i in 0..n {
        for j in i + 1..n {
            let s1 = pairs[i].0.partial_cmp(&pairs[j].0);
            let s2 = pairs[i].1.partial_cmp(&pairs[j].1);
            use std::cmp::Ordering::*;
            match (s1, s2) {
                (Some(Less), Some(Less)) | (Some(Greater), Some(Greater)) => concordant += 1,
                (Some(Less), Some(Greater)) | (Some(Greater), Some(Less)) => discordant += 1,
                _ => {}
            }
        }
    }
    let total = (n * (n - 1) / 2) as f64;
    Ok((concordant - discordant) as f64 / total)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UserAgreement {
    pub user_id: String,
    pub kendall_tau: f64,
    pub topk_overlap: f64,
    pub collapsed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AgreementReport {
    /// Mean over users.
    pub kendall_tau: f64,
    /// Mean over users of `|raw top-k ∩ latent top-k| / k`.
    pub topk_overlap: f64,
    /// Users whose latent scores span at most `tau_order`.
    pub collapse_flags: Vec<String>,
    pub per_user: Vec<UserAgreement>,
}

/// Per-user raw and latent rankings, truncated to `k`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Recommendation {
    pub raw: RankingResult,
    pub latent: RankingResult,
}

/// Full raw and latent rankings for every user, items encoded once.
fn full_rankings(dataset: &Dataset, f: &dyn Encoder) -> Result<Vec<(RankingResult, RankingResult)>, RecsysError> {
    if f.input_dim() != dataset.dim() {
        return Err(RecsysError::Dim {
            kind: "encoder input",
            id: String::new(),
            expected: dataset.dim(),
            found: f.input_dim(),
        });
    }
    let raw_items: Vec<Vector> = dataset.items.iter().map(|e| e.vector.clone()).collect();
    let latent_items = encode_entries(f, &dataset.items)?;
    let n = dataset.items.len();
    dataset
        .users
        .iter()
        .map(|u| {
            let raw = rank_scored(&u.id, scores(&u.vector, &dataset.items, &raw_items)?, n);
            let q = f.encode(&u.vector)?;
            let latent = rank_scored(&u.id, scores(&q, &dataset.items, &latent_items)?, n);
            Ok((raw, latent))
        })
        .collect()
}

/// Top-k lists in both spaces for every user, in dataset order.
pub fn recommend(dataset: &Dataset, f: &dyn Encoder, k: usize) -> Result<Vec<Recommendation>, RecsysError> {
    check_k(dataset, k)?;
    Ok(full_rankings(dataset, f)?
        .into_iter()
        .map(|(mut raw, mut latent)| {
            for r in [&mut raw, &mut latent] {
                r.ranked_items.truncate(k);
                r.k = k;
            }
            Recommendation { raw, latent }
        })
        .collect())
}

fn check_k(dataset: &Dataset, k: usize) -> Result<(), RecsysError> {
    if k == 0 {
        return Err(RecsysError::ZeroK);
    }
    if k > dataset.items.len() {
        return Err(RecsysError::KTooLarge {
            k,
            items: dataset.items.len(),
        });
    }
    Ok(())
}

/// Compares raw and latent rankings for every user.
pub fn evaluate_agreement(
    dataset: &Dataset,
    f: &dyn Encoder,
    k: usize,
    tol: &Tolerances,
) -> Result<AgreementReport, RecsysError> {
    check_k(dataset, k)?;
    let mut per_user = Vec::with_capacity(dataset.users.len());
    for (raw, latent) in full_rankings(dataset, f)? {
        let tau = kendall_tau(&raw, &latent)?;
        let raw_top: HashSet<&str> = raw.item_ids().take(k).collect();
        let shared = latent.item_ids().take(k).filter(|id| raw_top.contains(id)).count();
        let (lo, hi) = latent
            .ranked_items
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (_, s)| {
                (lo.min(*s), hi.max(*s))
            });
        per_user.push(UserAgreement {
            user_id: raw.query_id,
            kendall_tau: tau,
            topk_overlap: shared as f64 / k as f64,
            collapsed: hi - lo <= tol.tau_order,
        });
    }
    let count = per_user.len() as f64;
    Ok(AgreementReport {
        kendall_tau: per_user.iter().map(|u| u.kendall_tau).sum::<f64>() / count,
        topk_overlap: per_user.iter().map(|u| u.topk_overlap).sum::<f64>() / count,
        collapse_flags: per_user
            .iter()
            .filter(|u| u.collapsed)
            .map(|u| u.user_id.clone())
            .collect(),
        per_user,
    })
}

/// Shared loadings of a latent-factor model: vectors are `factors · loadings`.
struct FactorLoadings {
    dim: usize,
    rank: usize,
    /// `rank × dim`, row-major, entries drawn from N(0, 1/rank).
    loadings: Vec<f64>,
}

impl FactorLoadings {
    fn draw(dim: usize, rank: usize, rng: &mut ChaCha8Rng) -> Self {
        let normal = Normal::new(0.0, 1.0 / (rank as f64).sqrt()).expect("positive std");
        Self {
            dim,
            rank,
            loadings: (0..rank * dim).map(|_| normal.sample(rng)).collect(),
        }
    }

    /// One vector with unit-variance entries, then a `sparsity` fraction masked out.
    ///
    /// The mask is redrawn until at least one entry survives.
    fn sample(&self, sparsity: f64, rng: &mut ChaCha8Rng) -> Vector {
        let factors: Vec<f64> = (0..self.rank).map(|_| rng.sample(rand_distr::StandardNormal)).collect();
        let dense: Vec<f64> = (0..self.dim)
            .map(|c| {
                let mut acc = 0.0;
                for (r, f) in factors.iter().enumerate() {
                    acc += f * self.loadings[r * self.dim + c];
                }
                acc
            })
            .collect();
        loop {
            let masked: Vec<f64> = dense
                .iter()
                .map(|&v| if rng.random::<f64>() < sparsity { 0.0 } else { v })
                .collect();
            if masked.iter().any(|&v| v != 0.0) {
                return Vector::new(masked).expect("finite draws");
            }
        }
    }
}

fn check_sparsity(sparsity: f64) -> Result<(), RecsysError> {
    if !(0.0..1.0).contains(&sparsity) {
        return Err(RecsysError::Synth(format!("sparsity must lie in [0, 1), got {sparsity}")));
    }
    Ok(())
}

/// `count` vectors in `R^dim` drawn from a rank-`rank` latent-factor model.
pub fn low_rank_vectors(
    count: usize,
    dim: usize,
    rank: usize,
    sparsity: f64,
    seed: u64,
) -> Result<Vec<Vector>, RecsysError> {
    if dim == 0 || rank == 0 {
        return Err(RecsysError::Synth("dim and rank must be positive".into()));
    }
    check_sparsity(sparsity)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let model = FactorLoadings::draw(dim, rank, &mut rng);
    Ok((0..count).map(|_| model.sample(sparsity, &mut rng)).collect())
}

/// Seeded users and items from one latent-factor model of rank `max(2, dim / 4)`.
///
/// Ids are `u<index>` and `i<index>`, zero-padded to a common width so that
/// lexicographic and numeric order agree.
pub fn synth_dataset(
    n_users: usize,
    n_items: usize,
    dim: usize,
    sparsity: f64,
    seed: u64,
) -> Result<Dataset, RecsysError> {
    if n_users == 0 || n_items == 0 || dim == 0 {
        return Err(RecsysError::Synth("user count, item count and dim must be positive".into()));
    }
    check_sparsity(sparsity)?;
    let rank = (dim / 4).max(2);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let model = FactorLoadings::draw(dim, rank, &mut rng);
    let width = n_users.max(n_items).saturating_sub(1).to_string().len().max(4);
    let users = (0..n_users)
        .map(|i| Entry::new(format!("u{i:0width$}"), model.sample(sparsity, &mut rng)))
        .collect();
    let items = (0..n_items)
        .map(|i| Entry::new(format!("i{i:0width$}"), model.sample(sparsity, &mut rng)))
        .collect();
    Dataset::new(users, items)
}

/// Parses `kind,id,v0,...,v{n-1}` rows (header required, `kind` is `user` or `item`).
///
/// Row numbers in errors count the header as row 1.
pub fn parse_csv<R: io::Read>(reader: R) -> Result<Dataset, RecsysError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut records = rdr.records();
    let header = match records.next() {
        Some(h) => h.map_err(|e| csv_error(1, e))?,
        None => {
            return Err(RecsysError::Csv {
                row: 1,
                message: "missing header".into(),
            })
        }
    };
    let width = header.len();
    let header_ok = width >= 3
        && &header[0] == "kind"
        && &header[1] == "id"
        && (2..width).all(|c| header[c] == *format!("v{}", c - 2));
    if !header_ok {
        return Err(RecsysError::Csv {
            row: 1,
            message: "header must be kind,id,v0,v1,...".into(),
        });
    }
    let (mut users, mut items) = (Vec::new(), Vec::new());
    let mut seen: [HashSet<String>; 2] = Default::default();
    for (i, rec) in records.enumerate() {
        let row = i as u64 + 2;
        let rec = rec.map_err(|e| csv_error(row, e))?;
        if rec.len() == 1 && rec[0].is_empty() {
            continue;
        }
        if rec.len() != width {
            return Err(RecsysError::Csv {
                row,
                message: format!("expected {width} columns, found {}", rec.len()),
            });
        }
        let (slot, kind) = match &rec[0] {
            "user" => (0, "user"),
            "item" => (1, "item"),
            other => {
                return Err(RecsysError::Csv {
                    row,
                    message: format!("kind must be `user` or `item`, found {other:?}"),
                })
            }
        };
        let id = rec[1].to_owned();
        if id.is_empty() {
            return Err(RecsysError::Csv {
                row,
                message: "empty id".into(),
            });
        }
        if !seen[slot].insert(id.clone()) {
            return Err(RecsysError::Csv {
                row,
                message: format!("duplicate {kind} id {id:?}"),
            });
        }
        let values = (2..width)
            .map(|c| match rec[c].parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(RecsysError::Csv {
                    row,
                    message: format!("column {} ({}): {:?} is not a finite number", c + 1, &header[c], &rec[c]),
                }),
            })
            .collect::<Result<Vec<_>, _>>()?;
        let entry = Entry::new(id, Vector::new(values)?);
        if slot == 0 {
            users.push(entry);
        } else {
            items.push(entry);
        }
    }
    Dataset::new(users, items)
}

fn csv_error(row: u64, e: csv::Error) -> RecsysError {
    RecsysError::Csv {
        row,
        message: e.to_string(),
    }
}

pub fn load_csv(path: &Path) -> Result<Dataset, RecsysError> {
    let file = fs::File::open(path).map_err(|source| RecsysError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_csv(io::BufReader::new(file))
}

/// Serializes a dataset in the layout [`parse_csv`] reads.
pub fn to_csv(dataset: &Dataset) -> String {
    let mut out = String::from("kind,id");
    for c in 0..dataset.dim() {
        out.push_str(&format!(",v{c}"));
    }
    out.push('\n');
    for (kind, list) in [("user", &dataset.users), ("item", &dataset.items)] {
        for e in list.iter() {
            out.push_str(kind);
            out.push(',');
            out.push_str(&e.id);
            for v in e.vector.as_slice() {
                out.push_str(&format!(",{v:?}"));
            }
            out.push('\n');
        }
    }
    out
}

pub fn save_csv(dataset: &Dataset, path: &Path) -> Result<(), RecsysError> {
    crate::write_atomic(path, to_csv(dataset).as_bytes()).map_err(|source| RecsysError::Io {
        path: path.display().to_string(),
        source,
    })
}
