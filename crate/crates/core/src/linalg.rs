//! Small dense linear-algebra helpers shared across modules.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Product-moment correlation. `None` when either input is constant or has
/// fewer than two entries.
///
/// Panics if the slices differ in length.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    assert_eq!(x.len(), y.len(), "pearson: length mismatch");
    let n = x.len();
    if n < 2 {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let dx = a - mx;
        let dy = b - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return None;
    }
    // sqrt(a*a) == a exactly in IEEE arithmetic, so pearson(x, x) is exactly 1.
    let r = sxy / (sxx * syy).sqrt();
    Some(r.clamp(-1.0, 1.0))
}

pub fn mean(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    x.iter().sum::<f64>() / x.len() as f64
}

/// Population standard deviation.
pub fn pop_std(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    let m = mean(x);
    (x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / x.len() as f64).sqrt()
}

/// Sample (n - 1) standard deviation; zero for fewer than two values.
pub fn sample_std(x: &[f64]) -> f64 {
    if x.len() < 2 {
        return 0.0;
    }
    let m = mean(x);
    (x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (x.len() - 1) as f64).sqrt()
}

pub fn column(m: &DMatrix<f64>, j: usize) -> Vec<f64> {
    m.column(j).iter().copied().collect()
}

/// Pearson correlations between every column of `a` and every column of `b`.
/// Undefined correlations (constant columns) are reported as 0.
pub fn cross_correlation(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    assert_eq!(a.nrows(), b.nrows());
    let acols: Vec<Vec<f64>> = (0..a.ncols()).map(|j| column(a, j)).collect();
    let bcols: Vec<Vec<f64>> = (0..b.ncols()).map(|j| column(b, j)).collect();
    DMatrix::from_fn(a.ncols(), b.ncols(), |i, j| {
        pearson(&acols[i], &bcols[j]).unwrap_or(0.0)
    })
}

/// Solve `(a + ridge * I) x = b` for symmetric positive semi-definite `a`.
pub fn solve_spd(a: &DMatrix<f64>, b: &DMatrix<f64>, ridge: f64) -> Option<DMatrix<f64>> {
    let mut m = a.clone();
    for i in 0..m.nrows() {
        m[(i, i)] += ridge;
    }
    m.cholesky().map(|c| c.solve(b))
}

/// Moore-Penrose pseudo-inverse solve via SVD (minimum-norm solution).
pub fn solve_min_norm(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let eps = smax * 1e-12 * a.nrows().max(a.ncols()) as f64;
    svd.solve(b, eps).expect("svd computed with u and v")
}

/// Result of a top-k symmetric eigen solve.
#[derive(Debug, Clone)]
pub struct EigenPairs {
    /// Descending eigenvalues.
    pub values: Vec<f64>,
    /// Matching orthonormal eigenvectors as columns.
    pub vectors: DMatrix<f64>,
    pub converged: bool,
    /// Working block for warm restarts (subspace path only).
    pub block: Option<DMatrix<f64>>,
}

/// Largest-algebraic eigenpairs of a symmetric operator of order `dim`.
///
/// `apply` must compute `A * X` for a `dim x b` block `X`. `lower_bound` must
/// be a lower bound on the spectrum of `A`; the operator is shifted by it so
/// that power iteration targets the algebraically largest eigenvalues.
pub fn top_eigenpairs<F>(
    apply: F,
    dim: usize,
    k: usize,
    lower_bound: f64,
    warm: Option<&DMatrix<f64>>,
    tol: f64,
) -> EigenPairs
where
    F: Fn(&DMatrix<f64>) -> DMatrix<f64>,
{
    assert!(k >= 1 && k <= dim);
    const DENSE_LIMIT: usize = 256;
    if dim <= DENSE_LIMIT {
        let mut a = apply(&DMatrix::identity(dim, dim));
        a = (&a + a.transpose()) * 0.5;
        let (values, vectors) = sorted_symmetric_eigen(a);
        return EigenPairs {
            values: values[..k].to_vec(),
            vectors: vectors.columns(0, k).into_owned(),
            converged: true,
            block: None,
        };
    }

    let b = (2 * k).max(k + 8).min(dim);
    let shift = -lower_bound.min(0.0);
    let mut v = match warm {
        Some(w) if w.nrows() == dim && w.ncols() == b => w.clone(),
        _ => {
            let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_e16e);
            DMatrix::from_fn(dim, b, |_, _| StandardNormal.sample(&mut rng))
        }
    };
    v = orthonormalize(v);

    let max_iter = 3000;
    let mut converged = false;
    let mut values = vec![0.0; b];
    for _ in 0..max_iter {
        let av = apply(&v);
        // Rayleigh-Ritz on the current block.
        let h = v.transpose() * &av;
        let h = (&h + h.transpose()) * 0.5;
        let (ritz, rvec) = sorted_symmetric_eigen(h);
        let x = &v * &rvec;
        let ax = &av * &rvec;
        values = ritz;
        let scale = values.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        let mut worst = 0.0f64;
        for (i, &value) in values.iter().enumerate().take(k) {
            let r = ax.column(i) - x.column(i) * value;
            worst = worst.max(r.norm());
        }
        if worst <= tol * scale {
            v = x;
            converged = true;
            break;
        }
        // Shifted power step on the Ritz basis.
        let next = &ax + &x * shift;
        v = orthonormalize(next);
    }
    EigenPairs {
        values: values[..k].to_vec(),
        vectors: v.columns(0, k).into_owned(),
        converged,
        block: Some(v),
    }
}

/// Full symmetric eigendecomposition with eigenvalues sorted descending.
pub fn sorted_symmetric_eigen(a: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = a.nrows();
    let eig = SymmetricEigen::new(a);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        eig.eigenvalues[j]
            .partial_cmp(&eig.eigenvalues[i])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(i.cmp(&j))
    });
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

/// Orthonormal basis of the column span (thin QR).
pub fn orthonormalize(m: DMatrix<f64>) -> DMatrix<f64> {
    let ncols = m.ncols();
    let q = m.qr().q();
    q.columns(0, ncols).into_owned()
}

pub fn frobenius(m: &DMatrix<f64>) -> f64 {
    m.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn dvector_to_vec(v: &DVector<f64>) -> Vec<f64> {
    v.iter().copied().collect()
}

/// Serde adapter storing a matrix as a row-major array of rows.
pub mod rows {
    use nalgebra::DMatrix;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<Vec<f64>> = m
            .row_iter()
            .map(|r| r.iter().copied().collect())
            .collect();
        rows.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<f64>, D::Error> {
        let rows: Vec<Vec<f64>> = Vec::deserialize(d)?;
        from_rows(&rows).map_err(serde::de::Error::custom)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>, String> {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != ncols) {
            return Err("ragged matrix rows".into());
        }
        Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
    }

    pub mod option {
        use nalgebra::DMatrix;
        use serde::{Deserialize, Deserializer, Serializer};

        pub fn serialize<S: Serializer>(m: &Option<DMatrix<f64>>, s: S) -> Result<S::Ok, S::Error> {
            match m {
                Some(m) => super::serialize(m, s),
                None => s.serialize_none(),
            }
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(
            d: D,
        ) -> Result<Option<DMatrix<f64>>, D::Error> {
            let rows: Option<Vec<Vec<f64>>> = Option::deserialize(d)?;
            rows.map(|r| super::from_rows(&r).map_err(serde::de::Error::custom))
                .transpose()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pearson_known_values() {
        assert_eq!(pearson(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]), Some(1.0));
        assert_eq!(pearson(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]), Some(-1.0));
        let r = pearson(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0]).unwrap();
        assert!((r - 0.8).abs() < 1e-15);
        assert_eq!(pearson(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]), None);
    }

    #[test]
    fn self_correlation_is_exactly_one() {
        let x = [0.3, -1.7, 2.25, 9.1, 1e-3, 4.4];
        assert_eq!(pearson(&x, &x), Some(1.0));
    }

    #[test]
    fn subspace_solver_matches_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 300;
        let z = DMatrix::from_fn(80, n, |_, _| StandardNormal.sample(&mut rng));
        let a = z.transpose() * &z;
        let eig = top_eigenpairs(|x| &a * x, n, 4, 0.0, None, 1e-11);
        assert!(eig.converged);
        let (dense, _) = sorted_symmetric_eigen(a.clone());
        for i in 0..4 {
            assert!((eig.values[i] - dense[i]).abs() < 1e-7 * dense[0]);
            let r = &a * eig.vectors.column(i) - eig.vectors.column(i) * eig.values[i];
            assert!(r.norm() < 1e-8 * dense[0]);
        }
    }
}
