//! Truncated SVD baseline.

use nalgebra::DMatrix;

use super::{FactorModel, FitDiagnostics, Method, RotationRecord, ScoreBasis};
use crate::error::{Error, Result};
use crate::utm::StandardizedMatrix;

/// Rank-k part of a singular value decomposition.
#[derive(Debug, Clone)]
pub struct TruncatedSvd {
    /// n x k
    pub u: DMatrix<f64>,
    /// k leading singular values, descending.
    pub s: Vec<f64>,
    /// k x p
    pub vt: DMatrix<f64>,
    /// All singular values, descending.
    pub all_singular_values: Vec<f64>,
}

impl TruncatedSvd {
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let mut us = self.u.clone();
        for (c, s) in self.s.iter().enumerate() {
            us.column_mut(c).scale_mut(*s);
        }
        us * &self.vt
    }
}

pub fn truncated_svd(m: &DMatrix<f64>, k: usize) -> Result<TruncatedSvd> {
    let (n, p) = m.shape();
    if k == 0 || k > n.min(p) {
        return Err(Error::InvalidInput(format!(
            "rank {k} must be in 1..={}",
            n.min(p)
        )));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("svd input".into()));
    }
    let svd = m.clone().svd(true, true);
    let u = svd.u.expect("u requested");
    let vt = svd.v_t.expect("v_t requested");
    let sv = svd.singular_values;
    let mut order: Vec<usize> = (0..sv.len()).collect();
    order.sort_by(|&a, &b| sv[b].partial_cmp(&sv[a]).unwrap().then(a.cmp(&b)));
    let top = &order[..k];
    Ok(TruncatedSvd {
        u: DMatrix::from_fn(n, k, |i, c| u[(i, top[c])]),
        s: top.iter().map(|&i| sv[i]).collect(),
        vt: DMatrix::from_fn(k, p, |c, j| vt[(top[c], j)]),
        all_singular_values: order.iter().map(|&i| sv[i]).collect(),
    })
}

/// Loadings are right singular vectors scaled by `singular value / sqrt(n)`.
pub fn fit_svd(zm: &StandardizedMatrix, k: usize) -> Result<FactorModel> {
    let (n, p) = zm.z.shape();
    if k == 0 || k >= n.min(p) {
        return Err(Error::InvalidInput(format!(
            "factor count {k} must satisfy 1 <= k < min(users={n}, terms={p})"
        )));
    }
    let t = truncated_svd(&zm.z, k)?;
    let sqrt_n = (n as f64).sqrt();
    let loadings = DMatrix::from_fn(p, k, |j, c| t.vt[(c, j)] * t.s[c] / sqrt_n);
    let communalities = loadings
        .row_iter()
        .map(|r| r.iter().map(|v| v * v).sum())
        .collect();
    Ok(FactorModel {
        method: Method::Svd,
        k,
        vocabulary: zm.vocabulary.terms().to_vec(),
        loadings,
        rotation: RotationRecord::none(k),
        phi: DMatrix::identity(k, k),
        communalities,
        eigenvalues: t.s.iter().map(|s| s * s / n as f64).collect(),
        column_stats: zm.stats.clone(),
        sign_convention_applied: false,
        score_weights: None,
        score_ridge: 0.0,
        score_basis: ScoreBasis::Auto,
        diagnostics: FitDiagnostics {
            converged: true,
            iterations: 1,
            communality_init: None,
            heywood_terms: vec![],
            clamped_negative_eigenvalues: 0,
            eigen_solver_converged: true,
        },
        content_hash: String::new(),
    })
}
