use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticOptions {
    pub max_iter: usize,
    /// Convergence threshold on the gradient norm.
    pub tol: f64,
}

impl Default for LogisticOptions {
    fn default() -> Self {
        Self {
            max_iter: 100,
            tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub c: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Penalized negative log-likelihood after each accepted step (first entry at the start).
    pub objective_trace: Vec<f64>,
}

impl LogisticModel {
    pub fn decision_function(&self, x: &DMatrix<f64>) -> Vec<f64> {
        let w = DVector::from_column_slice(&self.weights);
        (x * w).iter().map(|v| v + self.intercept).collect()
    }

    pub fn predict_proba(&self, x: &DMatrix<f64>) -> Vec<f64> {
        self.decision_function(x).into_iter().map(sigmoid).collect()
    }
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// log(1 + e^t) without overflow.
fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

fn linear(x: &DMatrix<f64>, w: &[f64], b: f64) -> Vec<f64> {
    (0..x.nrows())
        .map(|i| b + (0..x.ncols()).map(|j| x[(i, j)] * w[j]).sum::<f64>())
        .collect()
}

/// Penalized negative log-likelihood `sum(log(1+e^eta) - y eta) + |w|^2 / (2c)`.
pub fn logistic_objective(x: &DMatrix<f64>, y: &[f64], w: &[f64], b: f64, c: f64) -> f64 {
    let eta = linear(x, w, b);
    let nll: f64 = eta.iter().zip(y).map(|(e, yi)| softplus(*e) - yi * e).sum();
    nll + w.iter().map(|v| v * v).sum::<f64>() / (2.0 * c)
}

/// Gradient of [`logistic_objective`] with respect to `(w, b)`.
pub fn logistic_gradient(x: &DMatrix<f64>, y: &[f64], w: &[f64], b: f64, c: f64) -> (Vec<f64>, f64) {
    let eta = linear(x, w, b);
    let r: Vec<f64> = eta.iter().zip(y).map(|(e, yi)| sigmoid(*e) - yi).collect();
    let gw = (0..x.ncols())
        .map(|j| (0..x.nrows()).map(|i| x[(i, j)] * r[i]).sum::<f64>() + w[j] / c)
        .collect();
    (gw, r.iter().sum())
}

/// L2-penalized logistic regression by damped Newton steps with backtracking.
/// Labels must be 0 or 1; the intercept is not penalized.
pub fn fit_logistic(x: &DMatrix<f64>, y: &[f64], c: f64, opts: &LogisticOptions) -> Result<LogisticModel> {
    let (n, p) = x.shape();
    if y.len() != n {
        return Err(Error::Dimension(format!("{n} rows vs {} labels", y.len())));
    }
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::InvalidInput(format!("c must be positive, got {c}")));
    }
    if y.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::InvalidInput("logistic labels must be 0 or 1".into()));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("logistic features".into()));
    }
    let pos = y.iter().filter(|&&v| v == 1.0).count();
    if pos == 0 || pos == n {
        return Err(Error::SingleClass(format!("logistic fit over {n} rows")));
    }

    let mut w = vec![0.0; p];
    let rate = pos as f64 / n as f64;
    let mut b = (rate / (1.0 - rate)).ln();
    let mut f = logistic_objective(x, y, &w, b, c);
    let mut trace = vec![f];
    let mut converged = false;
    let mut iterations = 0;
    let d = p + 1;
    for it in 0..opts.max_iter {
        let (gw, gb) = logistic_gradient(x, y, &w, b, c);
        let gnorm = (gw.iter().map(|g| g * g).sum::<f64>() + gb * gb).sqrt();
        if gnorm < opts.tol {
            converged = true;
            break;
        }
        iterations = it + 1;
        let eta = linear(x, &w, b);
        let mut h = DMatrix::zeros(d, d);
        for i in 0..n {
            let s = sigmoid(eta[i]);
            let s = s * (1.0 - s);
            for a in 0..d {
                let xa = if a < p { x[(i, a)] } else { 1.0 };
                if xa == 0.0 {
                    continue;
                }
                for bb in a..d {
                    let xb = if bb < p { x[(i, bb)] } else { 1.0 };
                    h[(a, bb)] += s * xa * xb;
                }
            }
        }
        for a in 0..d {
            for bb in 0..a {
                h[(a, bb)] = h[(bb, a)];
            }
        }
        for j in 0..p {
            h[(j, j)] += 1.0 / c;
        }
        h[(p, p)] += 1e-12;
        let g = DVector::from_iterator(d, gw.iter().copied().chain(std::iter::once(gb)));
        let step = match h.clone().cholesky() {
            Some(ch) => ch.solve(&g),
            None => g.clone(),
        };
        let slope = -step.dot(&g);
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let nw: Vec<f64> = (0..p).map(|j| w[j] - t * step[j]).collect();
            let nb = b - t * step[p];
            let nf = logistic_objective(x, y, &nw, nb, c);
            if nf <= f + 1e-4 * t * slope {
                w = nw;
                b = nb;
                f = nf;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            // No decrease available at machine precision.
            break;
        }
        trace.push(f);
    }
    if !converged {
        let (gw, gb) = logistic_gradient(x, y, &w, b, c);
        let gnorm = (gw.iter().map(|g| g * g).sum::<f64>() + gb * gb).sqrt();
        converged = gnorm < opts.tol;
        if !converged {
            log::debug!("fit_logistic: gradient norm {gnorm:.3e} after {iterations} iterations");
        }
    }
    Ok(LogisticModel {
        weights: w,
        intercept: b,
        c,
        converged,
        iterations,
        objective_trace: trace,
    })
}
