//! NMF clustering of the user-likes matrix into broad like categories.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::csr::CsrMatrix;
use crate::error::{Error, Result};
use crate::linalg::rows;

/// Guard added to multiplicative-update denominators.
pub const NMF_EPS: f64 = 1e-12;

/// Above this many cells the objective is computed by the trace identity
/// instead of an explicit residual.
const DIRECT_OBJECTIVE_CELLS: usize = 4_000_000;

/// Binary users x likes matrix restricted to the most popular likes.
#[derive(Debug, Clone)]
pub struct LikesMatrix {
    pub user_ids: Vec<String>,
    pub like_ids: Vec<String>,
    pub matrix: CsrMatrix,
}

/// Read `user_id,like_id` rows. Blank ids are rejected with their line number.
pub fn load_likes(path: &Path) -> Result<Vec<(String, String)>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::InvalidInput(format!("{}: {other:?}", path.display())),
    })?;
    let headers = rdr.headers()?.clone();
    let col = |name: &str| {
        headers.iter().position(|h| h.trim() == name).ok_or_else(|| {
            Error::InvalidInput(format!("{}: missing column {name}", path.display()))
        })
    };
    let (ui, li) = (col("user_id")?, col("like_id")?);
    let mut out = Vec::new();
    for (n, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let u = rec.get(ui).unwrap_or("").trim();
        let l = rec.get(li).unwrap_or("").trim();
        if u.is_empty() || l.is_empty() {
            return Err(Error::InvalidInput(format!(
                "{}: line {}: empty user_id or like_id",
                path.display(),
                n + 2
            )));
        }
        out.push((u.to_string(), l.to_string()));
    }
    Ok(out)
}

impl LikesMatrix {
    /// Keep the `top_n` likes with the most distinct users (ties lexicographic).
    /// Users are sorted; duplicate events collapse to a single 1.
    pub fn from_events(events: &[(String, String)], top_n: usize) -> Result<Self> {
        if events.is_empty() {
            return Err(Error::Empty("likes".into()));
        }
        let mut pairs: HashSet<(&str, &str)> = HashSet::new();
        for (u, l) in events {
            pairs.insert((u.as_str(), l.as_str()));
        }
        let mut popularity: HashMap<&str, usize> = HashMap::new();
        for &(_, l) in &pairs {
            *popularity.entry(l).or_default() += 1;
        }
        let mut ranked: Vec<(&str, usize)> = popularity.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        ranked.truncate(top_n);
        let like_ids: Vec<String> = ranked.iter().map(|(l, _)| l.to_string()).collect();
        let like_index: HashMap<&str, usize> =
            ranked.iter().enumerate().map(|(i, (l, _))| (*l, i)).collect();

        let mut by_user: BTreeMap<&str, Vec<(usize, f64)>> = BTreeMap::new();
        for &(u, l) in &pairs {
            let entry = by_user.entry(u).or_default();
            if let Some(&j) = like_index.get(l) {
                entry.push((j, 1.0));
            }
        }
        let user_ids: Vec<String> = by_user.keys().map(|u| u.to_string()).collect();
        let matrix = CsrMatrix::from_rows(like_ids.len(), by_user.into_values().collect())?;
        Ok(Self {
            user_ids,
            like_ids,
            matrix,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NmfOptions {
    pub rank: usize,
    pub iters: usize,
    pub seed: u64,
}

impl Default for NmfOptions {
    fn default() -> Self {
        Self {
            rank: 20,
            iters: 500,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NmfModel {
    pub rank: usize,
    /// users x rank
    #[serde(with = "rows")]
    pub w: DMatrix<f64>,
    /// rank x items
    #[serde(with = "rows")]
    pub h: DMatrix<f64>,
    /// Squared Frobenius error at initialization and after every iteration.
    pub objective_trace: Vec<f64>,
    pub seed: u64,
}

/// Squared Frobenius error `|V - W H|^2`.
pub fn nmf_objective(v: &CsrMatrix, w: &DMatrix<f64>, h: &DMatrix<f64>) -> f64 {
    let (n, m) = (v.nrows(), v.ncols());
    if n.saturating_mul(m) <= DIRECT_OBJECTIVE_CELLS {
        let wh = w * h;
        let mut total = 0.0;
        let mut dense_row = vec![0.0; m];
        for i in 0..n {
            dense_row.iter_mut().for_each(|x| *x = 0.0);
            for (j, x) in v.row(i) {
                dense_row[j] = x;
            }
            for j in 0..m {
                let d = dense_row[j] - wh[(i, j)];
                total += d * d;
            }
        }
        total
    } else {
        // |V|^2 - 2 tr(W^T V H^T) + tr(W^T W H H^T)
        let vht = v.mul_dense(&h.transpose());
        let cross: f64 = w.iter().zip(vht.iter()).map(|(a, b)| a * b).sum();
        let gram = w.tr_mul(w).component_mul(&(h * h.transpose())).sum();
        (v.squared_norm() - 2.0 * cross + gram).max(0.0)
    }
}

/// Multiplicative-update NMF minimizing squared Frobenius error from a
/// seeded uniform initialization.
pub fn fit_nmf(v: &CsrMatrix, opts: &NmfOptions) -> Result<NmfModel> {
    let (n, m) = (v.nrows(), v.ncols());
    let r = opts.rank;
    if r == 0 {
        return Err(Error::InvalidInput("NMF rank must be at least 1".into()));
    }
    if (0..n).any(|i| v.row(i).any(|(_, x)| x < 0.0 || !x.is_finite())) {
        return Err(Error::InvalidInput("NMF input must be finite and nonnegative".into()));
    }
    if v.nnz() == 0 {
        return Err(Error::Empty("NMF input is all zeros".into()));
    }
    let mean = (0..n).map(|i| v.row_sum(i)).sum::<f64>() / (n * m) as f64;
    let scale = (mean / r as f64).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut w = DMatrix::from_fn(n, r, |_, _| rng.random::<f64>() * scale);
    let mut h = DMatrix::from_fn(r, m, |_, _| rng.random::<f64>() * scale);

    let mut trace = Vec::with_capacity(opts.iters + 1);
    trace.push(nmf_objective(v, &w, &h));
    for _ in 0..opts.iters {
        let wtv = v.tmul_dense(&w);
        let wtwh = w.tr_mul(&w) * &h;
        h.zip_apply(&wtv.component_div(&wtwh.add_scalar(NMF_EPS)), |a, b| *a *= b);
        let vht = v.mul_dense(&h.transpose());
        let whht = &w * (&h * h.transpose());
        w.zip_apply(&vht.component_div(&whht.add_scalar(NMF_EPS)), |a, b| *a *= b);
        trace.push(nmf_objective(v, &w, &h));
    }
    Ok(NmfModel {
        rank: r,
        w,
        h,
        objective_trace: trace,
        seed: opts.seed,
    })
}

/// Dominant component per user; ties go to the lowest index and all-zero
/// rows are unassigned.
pub fn cluster_assign(model: &NmfModel) -> Vec<Option<usize>> {
    model
        .w
        .row_iter()
        .map(|row| {
            let mut best = 0;
            for (c, &x) in row.iter().enumerate() {
                if x > row[best] {
                    best = c;
                }
            }
            (row[best] > 0.0).then_some(best)
        })
        .collect()
}

/// Item indices of `cluster` ranked by H weight (descending, ties by id).
pub fn top_items(model: &NmfModel, item_ids: &[String], cluster: usize, n: usize) -> Result<Vec<usize>> {
    if cluster >= model.rank {
        return Err(Error::InvalidInput(format!("cluster {cluster} out of range 0..{}", model.rank)));
    }
    let row = model.h.row(cluster);
    let mut idx: Vec<usize> = (0..row.len()).collect();
    idx.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then(item_ids[a].cmp(&item_ids[b])));
    idx.truncate(n);
    Ok(idx)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSummary {
    pub cluster: usize,
    pub size: usize,
    pub top_items: Vec<(String, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserCluster {
    pub user_id: String,
    pub cluster: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterReport {
    pub rank: usize,
    pub seed: u64,
    pub iterations: usize,
    pub n_likes: usize,
    pub final_objective: f64,
    pub clusters: Vec<ClusterSummary>,
    pub assignments: Vec<UserCluster>,
}

impl ClusterReport {
    pub fn build(likes: &LikesMatrix, model: &NmfModel, top_n: usize) -> Result<Self> {
        let assign = cluster_assign(model);
        let clusters = (0..model.rank)
            .map(|c| {
                let items = top_items(model, &likes.like_ids, c, top_n)?;
                Ok(ClusterSummary {
                    cluster: c,
                    size: assign.iter().filter(|a| **a == Some(c)).count(),
                    top_items: items
                        .into_iter()
                        .map(|j| (likes.like_ids[j].clone(), model.h[(c, j)]))
                        .collect(),
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            rank: model.rank,
            seed: model.seed,
            iterations: model.objective_trace.len() - 1,
            n_likes: likes.like_ids.len(),
            final_objective: *model.objective_trace.last().unwrap(),
            clusters,
            assignments: likes
                .user_ids
                .iter()
                .zip(assign)
                .map(|(u, c)| UserCluster {
                    user_id: u.clone(),
                    cluster: c,
                })
                .collect(),
        })
    }

    /// One 0/1 target per cluster for `user_ids`; users without an
    /// assignment (or absent from the likes data) get NaN.
    pub fn targets(&self, user_ids: &[String]) -> Vec<Vec<f64>> {
        let lookup: HashMap<&str, Option<usize>> = self
            .assignments
            .iter()
            .map(|a| (a.user_id.as_str(), a.cluster))
            .collect();
        (0..self.rank)
            .map(|c| {
                user_ids
                    .iter()
                    .map(|u| match lookup.get(u.as_str()) {
                        Some(Some(a)) => (*a == c) as u8 as f64,
                        _ => f64::NAN,
                    })
                    .collect()
            })
            .collect()
    }
}
