use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::solve_min_norm;

/// L2-penalized linear regression, stored on the raw feature scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RidgeModel {
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub lambda: f64,
    pub feature_means: Vec<f64>,
    /// Sample standard deviations used for internal standardization.
    pub feature_stds: Vec<f64>,
    /// The penalized system was singular and the minimum-norm solution was used.
    pub min_norm_fallback: bool,
}

impl RidgeModel {
    pub fn predict(&self, x: &DMatrix<f64>) -> Vec<f64> {
        let w = DVector::from_column_slice(&self.weights);
        (x * w).iter().map(|v| v + self.intercept).collect()
    }
}

/// Column means and sample standard deviations (zero for constant columns).
pub fn feature_stats(x: &DMatrix<f64>) -> (Vec<f64>, Vec<f64>) {
    let n = x.nrows();
    let means: Vec<f64> = x.column_iter().map(|c| c.mean()).collect();
    let stds = x
        .column_iter()
        .zip(&means)
        .map(|(c, m)| {
            if n < 2 {
                return 0.0;
            }
            let ss: f64 = c.iter().map(|v| (v - m) * (v - m)).sum();
            let s = (ss / (n - 1) as f64).sqrt();
            if s > 1e-12 * (1.0 + m.abs()) { s } else { 0.0 }
        })
        .collect();
    (means, stds)
}

/// Standardize columns with the given statistics; constant columns become zero.
pub fn standardize_features(x: &DMatrix<f64>, means: &[f64], stds: &[f64]) -> DMatrix<f64> {
    DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| {
        if stds[j] > 0.0 { (x[(i, j)] - means[j]) / stds[j] } else { 0.0 }
    })
}

/// Fit ridge regression: features are z-scored internally (sample std), the
/// target is centered, and `(X^T X + lambda I) w = X^T y` is solved on that
/// system. Weights and intercept are reported on the original scales.
pub fn fit_ridge(x: &DMatrix<f64>, y: &[f64], lambda: f64) -> Result<RidgeModel> {
    let (n, p) = x.shape();
    if y.len() != n {
        return Err(Error::Dimension(format!("{n} rows vs {} targets", y.len())));
    }
    if n == 0 {
        return Err(Error::Empty("training rows".into()));
    }
    if lambda < 0.0 || !lambda.is_finite() {
        return Err(Error::InvalidInput(format!("lambda must be finite and >= 0, got {lambda}")));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("ridge inputs".into()));
    }
    let (means, stds) = feature_stats(x);
    let xs = standardize_features(x, &means, &stds);
    let y_mean = y.iter().sum::<f64>() / n as f64;
    let yc = DVector::from_iterator(n, y.iter().map(|v| v - y_mean));

    let mut a = xs.tr_mul(&xs);
    for j in 0..p {
        a[(j, j)] += lambda;
    }
    let b = DMatrix::from_column_slice(p, 1, xs.tr_mul(&yc).as_slice());
    let mut fallback = false;
    let w = match a.clone().cholesky() {
        Some(ch) if lambda > 0.0 || well_conditioned(&a) => ch.solve(&b),
        _ => {
            fallback = true;
            log::warn!("fit_ridge: singular system at lambda={lambda}, using minimum-norm solution");
            solve_min_norm(&a, &b)
        }
    };
    let weights: Vec<f64> = (0..p)
        .map(|j| if stds[j] > 0.0 { w[(j, 0)] / stds[j] } else { 0.0 })
        .collect();
    let intercept = y_mean - weights.iter().zip(&means).map(|(w, m)| w * m).sum::<f64>();
    if weights.iter().any(|w| !w.is_finite()) {
        return Err(Error::NonFinite("ridge weights".into()));
    }
    Ok(RidgeModel {
        weights,
        intercept,
        lambda,
        feature_means: means,
        feature_stds: stds,
        min_norm_fallback: fallback,
    })
}

fn well_conditioned(a: &DMatrix<f64>) -> bool {
    let s = a.clone().singular_values();
    let max = s.max();
    max > 0.0 && s.min() > max * 1e-12
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn exact_fit_without_penalty() {
        let x = DMatrix::from_column_slice(3, 1, &[1., 2., 3.]);
        let m = fit_ridge(&x, &[1., 2., 3.], 0.0).unwrap();
        for (p, t) in m.predict(&x).iter().zip([1., 2., 3.]) {
            assert!((p - t).abs() < 1e-10);
        }
        assert!(!m.min_norm_fallback);
    }

    #[test]
    fn shrinkage_example() {
        let x = DMatrix::from_column_slice(3, 1, &[-1., 0., 1.]);
        let m = fit_ridge(&x, &[-1., 0., 1.], 2.0).unwrap();
        assert!((m.weights[0] - 0.5).abs() < 1e-12);
        assert!(m.intercept.abs() < 1e-12);
        let p = m.predict(&x);
        assert!(p[2] < 1.0 && p[0] > -1.0);
    }

    #[test]
    fn constant_target() {
        let x = DMatrix::from_row_slice(4, 2, &[1., 0., 2., 5., 3., 1., 4., 2.]);
        let m = fit_ridge(&x, &[7.; 4], 1.0).unwrap();
        assert!(m.weights.iter().all(|w| w.abs() < 1e-14));
        assert!((m.intercept - 7.0).abs() < 1e-12);
    }

    #[test]
    fn collinear_zero_lambda_uses_min_norm() {
        let x = DMatrix::from_row_slice(4, 2, &[1., 2., 2., 4., 3., 6., 4., 8.]);
        let m = fit_ridge(&x, &[1., 2., 3., 4.], 0.0).unwrap();
        assert!(m.min_norm_fallback);
        for (p, t) in m.predict(&x).iter().zip([1., 2., 3., 4.]) {
            assert!((p - t).abs() < 1e-8);
        }
    }

    #[test]
    fn huge_lambda_collapses_to_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = DMatrix::from_fn(40, 3, |_, _| rng.random::<f64>());
        let y: Vec<f64> = (0..40).map(|i| x[(i, 0)] * 3.0 + rng.random::<f64>()).collect();
        let m = fit_ridge(&x, &y, 1e9).unwrap();
        let mean = y.iter().sum::<f64>() / 40.0;
        let sd = crate::linalg::pop_std(&y);
        assert!(m.predict(&x).iter().all(|p| (p - mean).abs() < 1e-3 * sd));
    }
}
