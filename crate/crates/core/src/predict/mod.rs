//! Supervised models and metrics for predictive-validity evaluation.

mod cv;
mod logistic;
mod metrics;
mod ridge;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use cv::{
    assign_folds, default_grid, fit_predict, grid_search_cv, score, CvOutcome, DEFAULT_C_GRID,
    DEFAULT_RIDGE_GRID,
};
pub use logistic::{fit_logistic, logistic_gradient, logistic_objective, LogisticModel, LogisticOptions};
pub use metrics::{auc, auc_pairwise, pearson_r};
pub use ridge::{feature_stats, fit_ridge, standardize_features, RidgeModel};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Regression,
    Classification,
}

impl Task {
    pub fn metric(self) -> &'static str {
        match self {
            Task::Regression => "pearson_r",
            Task::Classification => "auc",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub n_splits: usize,
    pub test_fraction: f64,
    pub folds: usize,
    /// Hyperparameter grid; `None` uses the task default.
    pub grid: Option<Vec<f64>>,
    pub seed_base: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            n_splits: 10,
            test_fraction: 0.2,
            folds: 5,
            grid: None,
            seed_base: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub outcome: String,
    /// Name of the feature set (e.g. `scores`, `demog`, `scores+demog`).
    pub features: String,
    pub task: Task,
    pub metric: String,
    pub n_rows: usize,
    pub per_split: Vec<f64>,
    pub mean: f64,
    /// Sample standard deviation over splits (0 for a single split).
    pub std: f64,
    pub hyperparameters: Vec<f64>,
    pub split_seeds: Vec<u64>,
    pub grid: Vec<f64>,
    pub folds: usize,
    pub test_fraction: f64,
    /// Splits whose test-set correlation was undefined and counted as 0.
    pub undefined_splits: usize,
}

impl EvalReport {
    /// Rows of `outcome,split,metric,value,hyperparameter`.
    pub fn csv_rows(&self) -> Vec<[String; 5]> {
        self.per_split
            .iter()
            .zip(&self.hyperparameters)
            .enumerate()
            .map(|(i, (v, h))| {
                [
                    self.outcome.clone(),
                    i.to_string(),
                    self.metric.clone(),
                    v.to_string(),
                    h.to_string(),
                ]
            })
            .collect()
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        reports_to_csv(std::slice::from_ref(self))
    }
}

/// Flat CSV over several reports, with the feature set as an extra column.
pub fn reports_to_csv(reports: &[EvalReport]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["outcome", "split", "metric", "value", "hyperparameter", "features"])?;
    for r in reports {
        for row in r.csv_rows() {
            w.write_record(row.iter().map(String::as_str).chain([r.features.as_str()]))?;
        }
    }
    w.into_inner()
        .map_err(|e| Error::InvalidInput(format!("csv flush: {e}")))
}

/// Random train/test split; stratified by class for classification.
pub fn train_test_split(y: &[f64], task: Task, test_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::InvalidInput(format!("test_fraction must be in (0,1), got {test_fraction}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let take = |idx: &mut Vec<usize>, rng: &mut ChaCha8Rng| -> Result<(Vec<usize>, Vec<usize>)> {
        if idx.len() < 2 {
            return Err(Error::InvalidInput(format!("cannot split {} rows", idx.len())));
        }
        idx.shuffle(rng);
        let n_test = ((idx.len() as f64 * test_fraction).round() as usize).clamp(1, idx.len() - 1);
        Ok((idx[n_test..].to_vec(), idx[..n_test].to_vec()))
    };
    let (mut train, mut test) = match task {
        Task::Regression => take(&mut (0..y.len()).collect(), &mut rng)?,
        Task::Classification => {
            let mut pos: Vec<usize> = (0..y.len()).filter(|&i| y[i] == 1.0).collect();
            let mut neg: Vec<usize> = (0..y.len()).filter(|&i| y[i] != 1.0).collect();
            if pos.len() < 2 || neg.len() < 2 {
                return Err(Error::SingleClass(format!(
                    "{} positives and {} negatives",
                    pos.len(),
                    neg.len()
                )));
            }
            let (mut tr, mut te) = take(&mut pos, &mut rng)?;
            let (tr2, te2) = take(&mut neg, &mut rng)?;
            tr.extend(tr2);
            te.extend(te2);
            (tr, te)
        }
    };
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

fn fold_seed(split_seed: u64) -> u64 {
    split_seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(1)
}

/// Repeated train/test evaluation: grid search on each training split,
/// refit on the whole training split, metric on the test split.
/// Rows whose target is not finite are dropped first.
pub fn eval_outcome(
    outcome: &str,
    features_name: &str,
    x: &DMatrix<f64>,
    y: &[f64],
    task: Task,
    cfg: &EvalConfig,
) -> Result<EvalReport> {
    if x.nrows() != y.len() {
        return Err(Error::Dimension(format!("{} feature rows vs {} targets", x.nrows(), y.len())));
    }
    if cfg.n_splits == 0 {
        return Err(Error::InvalidInput("n_splits must be at least 1".into()));
    }
    let keep: Vec<usize> = (0..y.len()).filter(|&i| y[i].is_finite()).collect();
    let x = cv::rows(x, &keep);
    let y: Vec<f64> = keep.iter().map(|&i| y[i]).collect();
    if task == Task::Classification && y.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::InvalidInput(format!("outcome {outcome}: classification targets must be 0/1")));
    }
    let grid = cfg.grid.clone().unwrap_or_else(|| default_grid(task));
    let seeds: Vec<u64> = (0..cfg.n_splits as u64).map(|s| cfg.seed_base + s).collect();

    let results: Vec<(f64, f64, bool)> = seeds
        .par_iter()
        .map(|&seed| {
            let (tr, te) = train_test_split(&y, task, cfg.test_fraction, seed)?;
            let xtr = cv::rows(&x, &tr);
            let ytr: Vec<f64> = tr.iter().map(|&i| y[i]).collect();
            let xte = cv::rows(&x, &te);
            let yte: Vec<f64> = te.iter().map(|&i| y[i]).collect();
            let best = grid_search_cv(&xtr, &ytr, task, &grid, cfg.folds, fold_seed(seed))?.best;
            let pred = fit_predict(task, &xtr, &ytr, &xte, best)?;
            let undefined = task == Task::Regression && pearson_r(&yte, &pred).is_none();
            Ok((score(task, &yte, &pred)?, best, undefined))
        })
        .collect::<Result<_>>()?;

    let per_split: Vec<f64> = results.iter().map(|r| r.0).collect();
    let mean = per_split.iter().sum::<f64>() / per_split.len() as f64;
    let std = if per_split.len() > 1 {
        crate::linalg::sample_std(&per_split)
    } else {
        0.0
    };
    Ok(EvalReport {
        outcome: outcome.to_string(),
        features: features_name.to_string(),
        task,
        metric: task.metric().to_string(),
        n_rows: y.len(),
        hyperparameters: results.iter().map(|r| r.1).collect(),
        undefined_splits: results.iter().filter(|r| r.2).count(),
        per_split,
        mean,
        std,
        split_seeds: seeds,
        grid,
        folds: cfg.folds,
        test_fraction: cfg.test_fraction,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn cfg(seed_base: u64) -> EvalConfig {
        EvalConfig { seed_base, ..Default::default() }
    }

    #[test]
    fn leakage_gives_near_perfect_r() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let y: Vec<f64> = (0..200).map(|_| rng.random::<f64>()).collect();
        let x = DMatrix::from_column_slice(200, 1, &y);
        let r = eval_outcome("y", "self", &x, &y, Task::Regression, &cfg(0)).unwrap();
        assert!(r.mean > 0.999);
        assert_eq!(r.per_split.len(), 10);
    }

    #[test]
    fn independent_features_near_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = DMatrix::from_fn(1000, 3, |_, _| rng.random::<f64>());
        let y: Vec<f64> = (0..1000).map(|_| rng.random::<f64>()).collect();
        let r = eval_outcome("y", "noise", &x, &y, Task::Regression, &cfg(7)).unwrap();
        assert!(r.mean.abs() < 0.1, "mean r {}", r.mean);
    }

    #[test]
    fn deterministic_and_consistent() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = DMatrix::from_fn(150, 2, |_, _| rng.random::<f64>() - 0.5);
        let y: Vec<f64> = (0..150).map(|i| if x[(i, 0)] + 0.3 * (rng.random::<f64>() - 0.5) > 0.0 { 1.0 } else { 0.0 }).collect();
        let a = eval_outcome("c", "x", &x, &y, Task::Classification, &cfg(3)).unwrap();
        let b = eval_outcome("c", "x", &x, &y, Task::Classification, &cfg(3)).unwrap();
        assert_eq!(a, b);
        assert!(a.mean > 0.8);
        let mean = a.per_split.iter().sum::<f64>() / a.per_split.len() as f64;
        assert!((a.mean - mean).abs() < 1e-15);
        assert_eq!(a.split_seeds, (3..13).collect::<Vec<u64>>());
        let csv = String::from_utf8(a.to_csv().unwrap()).unwrap();
        assert_eq!(csv.lines().count(), 11);
        assert!(csv.starts_with("outcome,split,metric,value,hyperparameter"));
    }

    #[test]
    fn stratified_split_keeps_classes() {
        let y: Vec<f64> = (0..50).map(|i| if i < 5 { 1.0 } else { 0.0 }).collect();
        let (tr, te) = train_test_split(&y, Task::Classification, 0.2, 1).unwrap();
        assert_eq!(tr.len() + te.len(), 50);
        assert!(te.iter().any(|&i| y[i] == 1.0) && tr.iter().any(|&i| y[i] == 1.0));
    }
}
