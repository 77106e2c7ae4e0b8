//! Orthomax (varimax / equamax) and promax rotations of a loading matrix.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OrthomaxCriterion {
    Varimax,
    Equamax,
}

impl OrthomaxCriterion {
    /// Orthomax weight: 1 for varimax, k/2 for equamax.
    pub fn gamma(self, k: usize) -> f64 {
        match self {
            OrthomaxCriterion::Varimax => 1.0,
            OrthomaxCriterion::Equamax => k as f64 / 2.0,
        }
    }
}

/// `sum_j [ sum_i l_ij^4 - (gamma / p) (sum_i l_ij^2)^2 ]`.
pub fn orthomax_criterion(l: &DMatrix<f64>, gamma: f64) -> f64 {
    let p = l.nrows() as f64;
    l.column_iter()
        .map(|c| {
            let s2: f64 = c.iter().map(|v| v * v).sum();
            let s4: f64 = c.iter().map(|v| v.powi(4)).sum();
            s4 - gamma / p * s2 * s2
        })
        .sum()
}

#[derive(Debug, Clone)]
pub struct OrthomaxResult {
    pub loadings: DMatrix<f64>,
    /// Orthogonal k x k matrix with `loadings = input * rotation`.
    pub rotation: DMatrix<f64>,
    /// Criterion on the Kaiser-normalized loadings, before the first sweep and
    /// after each sweep.
    pub criterion_trace: Vec<f64>,
    pub converged: bool,
}

fn row_norms(l: &DMatrix<f64>) -> Vec<f64> {
    l.row_iter().map(|r| r.norm()).collect()
}

/// Pairwise-planar orthomax rotation with Kaiser row normalization.
///
/// For columns `x, y` rotated by `phi` the criterion is
/// `const + P cos 4phi + Q sin 4phi`, so each plane rotation is solved in
/// closed form and a sweep can never decrease the criterion.
pub fn rotate_orthogonal(
    l: &DMatrix<f64>,
    criterion: OrthomaxCriterion,
    max_iter: usize,
    tol: f64,
) -> OrthomaxResult {
    let (p, k) = l.shape();
    if k < 2 {
        return OrthomaxResult {
            loadings: l.clone(),
            rotation: DMatrix::identity(k, k),
            criterion_trace: vec![orthomax_criterion(l, criterion.gamma(k))],
            converged: true,
        };
    }
    let gamma = criterion.gamma(k);
    let norms = row_norms(l);
    let mut a = DMatrix::from_fn(p, k, |i, j| {
        if norms[i] > 0.0 {
            l[(i, j)] / norms[i]
        } else {
            0.0
        }
    });
    let mut t = DMatrix::<f64>::identity(k, k);
    let pf = p as f64;
    let mut trace = vec![orthomax_criterion(&a, gamma)];
    let mut converged = false;
    for _ in 0..max_iter {
        for c1 in 0..k {
            for c2 in (c1 + 1)..k {
                let (mut sa, mut sb, mut sc, mut sd) = (0.0, 0.0, 0.0, 0.0);
                for i in 0..p {
                    let x = a[(i, c1)];
                    let y = a[(i, c2)];
                    let u = x * x - y * y;
                    let v = 2.0 * x * y;
                    sa += u;
                    sb += v;
                    sc += u * u - v * v;
                    sd += 2.0 * u * v;
                }
                let num = sd - 2.0 * gamma * sa * sb / pf;
                let den = sc - gamma * (sa * sa - sb * sb) / pf;
                if num.abs() <= 1e-15 * (den.abs() + 1e-300) && den >= 0.0 {
                    continue;
                }
                let phi = num.atan2(den) / 4.0;
                if phi.abs() < 1e-15 {
                    continue;
                }
                let (s, c) = phi.sin_cos();
                for i in 0..p {
                    let x = a[(i, c1)];
                    let y = a[(i, c2)];
                    a[(i, c1)] = c * x + s * y;
                    a[(i, c2)] = -s * x + c * y;
                }
                for i in 0..k {
                    let x = t[(i, c1)];
                    let y = t[(i, c2)];
                    t[(i, c1)] = c * x + s * y;
                    t[(i, c2)] = -s * x + c * y;
                }
            }
        }
        let crit = orthomax_criterion(&a, gamma);
        let gain = crit - trace.last().copied().unwrap_or(f64::NEG_INFINITY);
        trace.push(crit);
        if gain < tol {
            converged = true;
            break;
        }
    }
    OrthomaxResult {
        loadings: l * &t,
        rotation: t,
        criterion_trace: trace,
        converged,
    }
}

#[derive(Debug, Clone)]
pub struct PromaxResult {
    /// Oblique pattern matrix.
    pub pattern: DMatrix<f64>,
    /// Factor correlations, unit diagonal.
    pub phi: DMatrix<f64>,
    /// `pattern = input * rotation`.
    pub rotation: DMatrix<f64>,
    pub orthogonal: OrthomaxResult,
    /// The Procrustes step was singular; the orthogonal solution was returned.
    pub fallback: bool,
}

/// Equamax pre-rotation followed by the promax oblique step: least-squares
/// fit of the pre-rotated loadings to their sign-preserving `kappa`-th power,
/// with columns rescaled so the factor correlation matrix has unit diagonal.
pub fn rotate_promax(l: &DMatrix<f64>, kappa: u32, max_iter: usize, tol: f64) -> PromaxResult {
    let k = l.ncols();
    let orth = rotate_orthogonal(l, OrthomaxCriterion::Equamax, max_iter, tol);
    let fallback = |orth: OrthomaxResult| PromaxResult {
        pattern: orth.loadings.clone(),
        phi: DMatrix::identity(k, k),
        rotation: orth.rotation.clone(),
        orthogonal: orth,
        fallback: true,
    };
    if k < 2 {
        let mut r = fallback(orth);
        r.fallback = false;
        return r;
    }
    let x = &orth.loadings;
    let target = x.map(|v| v.signum() * v.abs().powi(kappa as i32));
    let xtx = x.transpose() * x;
    let u = match xtx.clone().cholesky() {
        Some(ch) => ch.solve(&(x.transpose() * &target)),
        None => {
            log::warn!("promax: singular normal equations, keeping orthogonal solution");
            return fallback(orth);
        }
    };
    let utu_inv = match (u.transpose() * &u).try_inverse() {
        Some(m) => m,
        None => {
            log::warn!("promax: singular transform, keeping orthogonal solution");
            return fallback(orth);
        }
    };
    let d: Vec<f64> = (0..k).map(|i| utu_inv[(i, i)]).collect();
    if d.iter().any(|&v| v.is_nan() || v <= 0.0 || !v.is_finite()) {
        return fallback(orth);
    }
    let scale = DMatrix::from_fn(k, k, |i, j| if i == j { d[i].sqrt() } else { 0.0 });
    let u = &u * scale;
    let pattern = x * &u;
    let phi_raw = match (u.transpose() * &u).try_inverse() {
        Some(m) => m,
        None => return fallback(orth),
    };
    let mut phi = (&phi_raw + phi_raw.transpose()) * 0.5;
    for i in 0..k {
        phi[(i, i)] = 1.0;
    }
    PromaxResult {
        pattern,
        phi,
        rotation: &orth.rotation * u,
        orthogonal: orth,
        fallback: false,
    }
}
