use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::logistic::{fit_logistic, LogisticOptions};
use super::metrics::{auc, pearson_r};
use super::ridge::{feature_stats, fit_ridge, standardize_features};
use super::Task;
use crate::error::{Error, Result};

/// Training rows, training targets, test rows, test targets.
type Split = (DMatrix<f64>, Vec<f64>, DMatrix<f64>, Vec<f64>);

/// Ridge penalties, strongest first so ties favour more regularization.
pub const DEFAULT_RIDGE_GRID: [f64; 7] = [10000.0, 1000.0, 100.0, 10.0, 1.0, 0.1, 0.01];
/// Logistic inverse penalties, strongest regularization first.
pub const DEFAULT_C_GRID: [f64; 5] = [0.001, 0.01, 0.1, 1.0, 10.0];

pub fn default_grid(task: Task) -> Vec<f64> {
    match task {
        Task::Regression => DEFAULT_RIDGE_GRID.to_vec(),
        Task::Classification => DEFAULT_C_GRID.to_vec(),
    }
}

pub(crate) fn rows(x: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), x.ncols(), |i, j| x[(idx[i], j)])
}

fn labels(y: &[f64]) -> Vec<bool> {
    y.iter().map(|&v| v == 1.0).collect()
}

/// Fit on the training rows with hyperparameter `h` and return test-set
/// predictions (ridge) or decision values (logistic, on features z-scored
/// with training statistics).
pub fn fit_predict(
    task: Task,
    x_train: &DMatrix<f64>,
    y_train: &[f64],
    x_test: &DMatrix<f64>,
    h: f64,
) -> Result<Vec<f64>> {
    match task {
        Task::Regression => Ok(fit_ridge(x_train, y_train, h)?.predict(x_test)),
        Task::Classification => {
            let (m, s) = feature_stats(x_train);
            let xt = standardize_features(x_train, &m, &s);
            let model = fit_logistic(&xt, y_train, h, &LogisticOptions::default())?;
            Ok(model.decision_function(&standardize_features(x_test, &m, &s)))
        }
    }
}

/// Metric of predictions against targets. Undefined correlations count as 0.
pub fn score(task: Task, y: &[f64], pred: &[f64]) -> Result<f64> {
    match task {
        Task::Regression => Ok(pearson_r(y, pred).unwrap_or(0.0)),
        Task::Classification => auc(&labels(y), pred),
    }
}

/// Fold index per row. Classification folds are stratified; when the
/// minority class has fewer rows than `folds`, the fold count is reduced
/// so every fold still contains both classes.
pub fn assign_folds(y: &[f64], task: Task, folds: usize, seed: u64) -> Result<(Vec<usize>, usize)> {
    let n = y.len();
    if folds < 2 {
        return Err(Error::InvalidInput("at least 2 folds required".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = vec![0usize; n];
    match task {
        Task::Regression => {
            if n < folds {
                return Err(Error::InvalidInput(format!("{n} rows cannot fill {folds} folds")));
            }
            let mut idx: Vec<usize> = (0..n).collect();
            idx.shuffle(&mut rng);
            for (pos, &i) in idx.iter().enumerate() {
                out[i] = pos % folds;
            }
            Ok((out, folds))
        }
        Task::Classification => {
            let mut pos: Vec<usize> = (0..n).filter(|&i| y[i] == 1.0).collect();
            let mut neg: Vec<usize> = (0..n).filter(|&i| y[i] != 1.0).collect();
            let minority = pos.len().min(neg.len());
            if minority < 2 {
                return Err(Error::SingleClass(format!(
                    "need at least 2 rows of each class for cross-validation, minority has {minority}"
                )));
            }
            let k = folds.min(minority);
            if k < folds {
                log::warn!("cross-validation: reduced to {k} stratified folds (minority class size {minority})");
            }
            pos.shuffle(&mut rng);
            neg.shuffle(&mut rng);
            for (p, &i) in pos.iter().enumerate() {
                out[i] = p % k;
            }
            for (p, &i) in neg.iter().enumerate() {
                out[i] = p % k;
            }
            Ok((out, k))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvOutcome {
    pub best: f64,
    pub best_index: usize,
    pub mean_scores: Vec<f64>,
    pub folds: usize,
}

/// K-fold grid search. The best value has the highest mean fold metric;
/// ties keep the earliest grid position.
pub fn grid_search_cv(
    x: &DMatrix<f64>,
    y: &[f64],
    task: Task,
    grid: &[f64],
    folds: usize,
    seed: u64,
) -> Result<CvOutcome> {
    if grid.is_empty() {
        return Err(Error::Empty("hyperparameter grid".into()));
    }
    if x.nrows() != y.len() {
        return Err(Error::Dimension(format!("{} rows vs {} targets", x.nrows(), y.len())));
    }
    let (fold_of, k) = assign_folds(y, task, folds, seed)?;
    let splits: Vec<Split> = (0..k)
        .map(|f| {
            let tr: Vec<usize> = (0..y.len()).filter(|&i| fold_of[i] != f).collect();
            let te: Vec<usize> = (0..y.len()).filter(|&i| fold_of[i] == f).collect();
            (
                rows(x, &tr),
                tr.iter().map(|&i| y[i]).collect(),
                rows(x, &te),
                te.iter().map(|&i| y[i]).collect(),
            )
        })
        .collect();
    let mean_scores: Vec<f64> = grid
        .par_iter()
        .map(|&h| {
            let mut total = 0.0;
            for (xtr, ytr, xte, yte) in &splits {
                let pred = fit_predict(task, xtr, ytr, xte, h)?;
                total += score(task, yte, &pred)?;
            }
            Ok(total / k as f64)
        })
        .collect::<Result<_>>()?;
    let mut best_index = 0;
    for (i, &s) in mean_scores.iter().enumerate() {
        if s > mean_scores[best_index] {
            best_index = i;
        }
    }
    Ok(CvOutcome {
        best: grid[best_index],
        best_index,
        mean_scores,
        folds: k,
    })
}
