use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::align::align_scores;
use crate::corpus::UserCorpus;
use crate::error::{Error, Result};
use crate::factors::FactorScores;
use crate::pipeline::{FactorConfig, FittedPipeline};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DropoutConfig {
    pub drop_fraction: f64,
    pub runs: usize,
    pub seed_base: u64,
}

impl Default for DropoutConfig {
    fn default() -> Self {
        Self {
            drop_fraction: 0.2,
            runs: 100,
            seed_base: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunPair {
    pub i: usize,
    pub j: usize,
    pub mean_abs_r: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DropoutReport {
    pub runs: usize,
    pub drop_fraction: f64,
    pub seeds: Vec<u64>,
    pub n_train_users: usize,
    pub n_dropped_per_run: usize,
    /// Held-out users scored by every run.
    pub n_holdout_users: usize,
    pub model_hashes: Vec<String>,
    pub pairs: Vec<RunPair>,
    /// Mean over all run pairs; `None` with fewer than two runs.
    pub grand_mean: Option<f64>,
    pub insufficient_runs: bool,
}

/// Indices kept in a run: a seeded shuffle with the first
/// `round(drop_fraction * n)` positions dropped.
pub fn kept_indices(n: usize, drop_fraction: f64, seed: u64) -> Vec<usize> {
    let m = (drop_fraction * n as f64).round() as usize;
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut kept = idx[m.min(n)..].to_vec();
    kept.sort_unstable();
    kept
}

/// Refit the pipeline on random subsamples of `train`, score the fixed
/// `holdout` corpus with each fit, and compare every pair of runs by the
/// mean aligned |r| of their held-out scores.
pub fn dropout_reliability(
    train: &UserCorpus,
    holdout: &UserCorpus,
    factor_cfg: &FactorConfig,
    cfg: &DropoutConfig,
) -> Result<DropoutReport> {
    if !(0.0..1.0).contains(&cfg.drop_fraction) {
        return Err(Error::InvalidInput(format!("drop_fraction must be in [0,1), got {}", cfg.drop_fraction)));
    }
    if holdout.is_empty() {
        return Err(Error::Empty("held-out corpus".into()));
    }
    let seeds: Vec<u64> = (0..cfg.runs as u64).map(|r| cfg.seed_base + r).collect();
    let fits: Vec<(String, FactorScores)> = seeds
        .par_iter()
        .map(|&seed| {
            let kept: HashSet<usize> = kept_indices(train.len(), cfg.drop_fraction, seed).into_iter().collect();
            let users = train
                .users
                .iter()
                .enumerate()
                .filter(|(i, _)| kept.contains(i))
                .map(|(_, u)| u.clone())
                .collect();
            let sub = UserCorpus { users, filter_config: train.filter_config.clone() };
            let (pipeline, _) = FittedPipeline::fit(&sub, factor_cfg)?;
            Ok((pipeline.model.content_hash.clone(), pipeline.score_corpus(holdout)?))
        })
        .collect::<Result<_>>()?;

    // Restrict to held-out users every run could score.
    let mut common: Option<HashSet<String>> = None;
    for (_, s) in &fits {
        let ids: HashSet<String> = s.user_ids.iter().cloned().collect();
        common = Some(match common {
            None => ids,
            Some(c) => c.intersection(&ids).cloned().collect(),
        });
    }
    let common_ids: Vec<String> = holdout
        .user_ids()
        .into_iter()
        .filter(|u| common.as_ref().is_some_and(|c| c.contains(u)))
        .collect();
    let scores: Vec<FactorScores> = fits.iter().map(|(_, s)| s.select(&common_ids)).collect::<Result<_>>()?;

    let index_pairs: Vec<(usize, usize)> = (0..scores.len())
        .flat_map(|i| (i + 1..scores.len()).map(move |j| (i, j)))
        .collect();
    let pairs: Vec<RunPair> = index_pairs
        .par_iter()
        .map(|&(i, j)| Ok(RunPair { i, j, mean_abs_r: align_scores(&scores[i], &scores[j])?.mean_abs_r }))
        .collect::<Result<_>>()?;
    let insufficient = cfg.runs < 2;
    if insufficient {
        log::warn!("dropout reliability: {} run(s) give no pairs to compare", cfg.runs);
    }
    let grand_mean = (!pairs.is_empty()).then(|| pairs.iter().map(|p| p.mean_abs_r).sum::<f64>() / pairs.len() as f64);
    Ok(DropoutReport {
        runs: cfg.runs,
        drop_fraction: cfg.drop_fraction,
        seeds,
        n_train_users: train.len(),
        n_dropped_per_run: (cfg.drop_fraction * train.len() as f64).round() as usize,
        n_holdout_users: common_ids.len(),
        model_hashes: fits.into_iter().map(|(h, _)| h).collect(),
        pairs,
        grand_mean,
        insufficient_runs: insufficient,
    })
}
