//! Principal-axis factoring of the term correlation matrix.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{FactorModel, FitDiagnostics, Method, RotationRecord, ScoreBasis};
use crate::error::{Error, Result};
use crate::linalg::top_eigenpairs;
use crate::utm::StandardizedMatrix;

/// Heywood communalities are clipped to this value.
pub const HEYWOOD_CEILING: f64 = 1.0 - 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FaOptions {
    pub max_iter: usize,
    /// Convergence threshold on the largest communality change.
    pub tol: f64,
}

impl Default for FaOptions {
    fn default() -> Self {
        Self {
            max_iter: 200,
            tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CommunalityInit {
    SquaredMultipleCorrelation,
    MaxAbsCorrelation,
}

/// Correlation operator `R = Z^T Z / n` for a column-standardized `Z`.
/// Dense when the term count is at most the user count, matrix-free otherwise
/// (which is also the users x users dual route for very wide vocabularies).
pub(crate) enum CorrelationOp<'a> {
    Dense(DMatrix<f64>),
    Factored { z: &'a DMatrix<f64>, n: f64 },
}

impl<'a> CorrelationOp<'a> {
    pub(crate) fn new(z: &'a DMatrix<f64>) -> Self {
        let (n, p) = z.shape();
        if p <= n {
            Self::Dense(z.tr_mul(z) / n as f64)
        } else {
            Self::Factored { z, n: n as f64 }
        }
    }

    pub(crate) fn apply(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            Self::Dense(r) => r * x,
            Self::Factored { z, n } => z.tr_mul(&(*z * x)) / *n,
        }
    }

    pub(crate) fn dense(&self) -> Option<&DMatrix<f64>> {
        match self {
            Self::Dense(r) => Some(r),
            Self::Factored { .. } => None,
        }
    }
}

fn diag_of_r(z: &DMatrix<f64>) -> Vec<f64> {
    let n = z.nrows() as f64;
    z.column_iter()
        .map(|c| c.iter().map(|v| v * v).sum::<f64>() / n)
        .collect()
}

/// Squared multiple correlations on the active (non-constant) columns, or
/// `None` when the active correlation matrix is singular.
fn squared_multiple_correlations(r: &DMatrix<f64>, active: &[usize]) -> Option<Vec<f64>> {
    let m = active.len();
    let sub = DMatrix::from_fn(m, m, |i, j| r[(active[i], active[j])]);
    let chol = sub.cholesky()?;
    let inv = chol.inverse();
    let mut out = vec![0.0; r.nrows()];
    for (a, &j) in active.iter().enumerate() {
        let d = inv[(a, a)];
        if !(d.is_finite() && d >= 1.0 - 1e-9) || d > 1e12 {
            return None;
        }
        out[j] = (1.0 - 1.0 / d).clamp(0.0, 1.0);
    }
    Some(out)
}

/// Largest absolute off-diagonal correlation per active column.
fn max_abs_correlation(z: &DMatrix<f64>, op: &CorrelationOp, active: &[bool]) -> Vec<f64> {
    let p = z.ncols();
    let n = z.nrows() as f64;
    let mut out = vec![0.0f64; p];
    const BLOCK: usize = 256;
    let mut start = 0;
    while start < p {
        let w = BLOCK.min(p - start);
        let block = match op.dense() {
            Some(r) => r.columns(start, w).into_owned(),
            None => z.tr_mul(&z.columns(start, w)) / n,
        };
        for c in 0..w {
            let j = start + c;
            if !active[j] {
                continue;
            }
            for i in 0..p {
                if i != j && active[i] {
                    out[j] = out[j].max(block[(i, c)].abs());
                }
            }
        }
        start += w;
    }
    out
}

/// Unrotated principal-axis factor solution with `k` factors.
///
/// Communalities start from squared multiple correlations (falling back to
/// the largest absolute correlation when the correlation matrix is singular)
/// and are refined by repeated eigendecomposition of the reduced correlation
/// matrix until the largest change falls below `opts.tol`.
pub fn fit_fa(zm: &StandardizedMatrix, k: usize, opts: &FaOptions) -> Result<FactorModel> {
    let z = &zm.z;
    let (n, p) = z.shape();
    if k == 0 || k >= n.min(p) {
        return Err(Error::InvalidInput(format!(
            "factor count {k} must satisfy 1 <= k < min(users={n}, terms={p})"
        )));
    }
    if z.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("standardized matrix".into()));
    }
    let op = CorrelationOp::new(z);
    let diag_r = diag_of_r(z);
    let active: Vec<bool> = diag_r.iter().map(|&d| d > 0.5).collect();
    let active_idx: Vec<usize> = (0..p).filter(|&j| active[j]).collect();

    let smc = if p < n {
        op.dense()
            .and_then(|r| squared_multiple_correlations(r, &active_idx))
    } else {
        None
    };
    let (mut h2, init) = match smc {
        Some(s) => (s, CommunalityInit::SquaredMultipleCorrelation),
        None => (
            max_abs_correlation(z, &op, &active),
            CommunalityInit::MaxAbsCorrelation,
        ),
    };
    for (j, h) in h2.iter_mut().enumerate() {
        if !active[j] {
            *h = 0.0;
        }
        *h = h.min(HEYWOOD_CEILING);
    }

    let mut warm: Option<DMatrix<f64>> = None;
    let mut converged = false;
    let mut eig_ok = true;
    let mut iterations = 0;
    let mut loadings = DMatrix::zeros(p, k);
    let mut values = vec![0.0; k];
    for it in 1..=opts.max_iter.max(1) {
        iterations = it;
        let shrink: Vec<f64> = diag_r.iter().zip(&h2).map(|(d, h)| d - h).collect();
        let lower = -shrink.iter().cloned().fold(0.0, f64::max);
        let apply = |x: &DMatrix<f64>| {
            let mut y = op.apply(x);
            for (j, s) in shrink.iter().enumerate() {
                if *s != 0.0 {
                    for c in 0..x.ncols() {
                        y[(j, c)] -= s * x[(j, c)];
                    }
                }
            }
            y
        };
        let eig = top_eigenpairs(apply, p, k, lower, warm.as_ref(), 1e-10);
        eig_ok &= eig.converged;
        warm = eig.block;
        values = eig.values;
        loadings = eig.vectors;
        for (c, v) in values.iter().enumerate() {
            let s = v.max(0.0).sqrt();
            loadings.column_mut(c).scale_mut(s);
        }
        let next: Vec<f64> = loadings
            .row_iter()
            .map(|r| r.iter().map(|v| v * v).sum::<f64>().min(HEYWOOD_CEILING))
            .collect();
        let change = next
            .iter()
            .zip(&h2)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        h2 = next;
        if change < opts.tol {
            converged = true;
            break;
        }
    }

    let clamped = values.iter().filter(|&&v| v < 0.0).count();
    let mut heywood = Vec::new();
    let mut communalities = Vec::with_capacity(p);
    for j in 0..p {
        let s: f64 = loadings.row(j).iter().map(|v| v * v).sum();
        if s > 1.0 {
            heywood.push(zm.vocabulary.terms()[j].clone());
            loadings.row_mut(j).scale_mut((HEYWOOD_CEILING / s).sqrt());
            communalities.push(HEYWOOD_CEILING);
        } else {
            communalities.push(s);
        }
    }
    if !heywood.is_empty() {
        log::warn!("fit_fa: {} Heywood case(s) clipped", heywood.len());
    }
    if !converged {
        log::warn!("fit_fa: no convergence after {iterations} iterations");
    }

    Ok(FactorModel {
        method: Method::Fa,
        k,
        vocabulary: zm.vocabulary.terms().to_vec(),
        loadings,
        rotation: RotationRecord::none(k),
        phi: DMatrix::identity(k, k),
        communalities,
        eigenvalues: values.iter().map(|v| v.max(0.0)).collect(),
        column_stats: zm.stats.clone(),
        sign_convention_applied: false,
        score_weights: None,
        score_ridge: 0.0,
        score_basis: ScoreBasis::Auto,
        diagnostics: FitDiagnostics {
            converged,
            iterations,
            communality_init: Some(init),
            heywood_terms: heywood,
            clamped_negative_eigenvalues: clamped,
            eigen_solver_converged: eig_ok,
        },
        content_hash: String::new(),
    })
}
