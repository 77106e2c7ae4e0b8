use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{TokenizedMessage, UserCorpus, UserRecord};
use crate::error::{Error, Result};
use crate::factors::FactorScores;
use crate::fixture::SECONDS_PER_MONTH;
use crate::linalg::{column, pearson};
use crate::pipeline::{FactorConfig, FittedPipeline};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetestConfig {
    /// Fraction of messages used to fit the model.
    pub train_fraction: f64,
    pub period_months: u32,
    /// In-period tokens a user needs to be scored for that period.
    pub min_period_tokens: u64,
    /// Fewer common users than this marks a comparison as missing.
    pub min_common_users: usize,
    pub seed: u64,
}

impl Default for RetestConfig {
    fn default() -> Self {
        Self {
            train_fraction: 0.75,
            period_months: 6,
            min_period_tokens: 50,
            min_common_users: 10,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodSummary {
    pub index: usize,
    /// Window start (inclusive) and end (exclusive), seconds since epoch.
    pub start: i64,
    pub end: i64,
    pub n_users: usize,
}

/// Per-factor correlations between two periods over their common users.
/// `r` is `None` when too few users are shared.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodCorrelation {
    pub from: usize,
    pub to: usize,
    pub n_common: usize,
    pub r: Option<Vec<Option<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetestReport {
    pub factor_names: Vec<String>,
    pub model_hash: String,
    pub train_fraction: f64,
    pub seed: u64,
    pub n_train_users: usize,
    pub anchor: i64,
    pub period_seconds: f64,
    pub periods: Vec<PeriodSummary>,
    /// Period t against period 0, for every t (t = 0 included).
    pub vs_first: Vec<PeriodCorrelation>,
    /// Period t against period t + 1.
    pub adjacent: Vec<PeriodCorrelation>,
    /// Mean over t >= 1 of the period-0 correlations, per factor.
    pub mean_cross_period_r: Vec<Option<f64>>,
}

pub struct RetestRun {
    pub report: RetestReport,
    pub pipeline: FittedPipeline,
}

fn correlate(a: Option<&FactorScores>, b: Option<&FactorScores>, from: usize, to: usize, min_common: usize) -> PeriodCorrelation {
    let (Some(a), Some(b)) = (a, b) else {
        return PeriodCorrelation { from, to, n_common: 0, r: None };
    };
    let pos: HashMap<&str, usize> = b.user_ids.iter().enumerate().map(|(i, u)| (u.as_str(), i)).collect();
    let pairs: Vec<(usize, usize)> = a
        .user_ids
        .iter()
        .enumerate()
        .filter_map(|(i, u)| pos.get(u.as_str()).map(|&j| (i, j)))
        .collect();
    let n_common = pairs.len();
    if n_common < min_common {
        return PeriodCorrelation { from, to, n_common, r: None };
    }
    let r = (0..a.k())
        .map(|c| {
            let ca = column(&a.scores, c);
            let cb = column(&b.scores, c);
            let x: Vec<f64> = pairs.iter().map(|&(i, _)| ca[i]).collect();
            let y: Vec<f64> = pairs.iter().map(|&(_, j)| cb[j]).collect();
            pearson(&x, &y)
        })
        .collect();
    PeriodCorrelation { from, to, n_common, r: Some(r) }
}

/// Split messages at random into a training portion (fit) and a test
/// portion, bucket test messages into fixed windows anchored at the earliest
/// test timestamp, score each window and correlate scores across windows.
pub fn test_retest(corpus: &UserCorpus, factor_cfg: &FactorConfig, cfg: &RetestConfig) -> Result<RetestRun> {
    if !corpus.has_timestamps() {
        return Err(Error::MissingTimestamps("test-retest needs message timestamps".into()));
    }
    if !(cfg.train_fraction > 0.0 && cfg.train_fraction < 1.0) {
        return Err(Error::InvalidInput(format!("train_fraction must be in (0,1), got {}", cfg.train_fraction)));
    }
    if cfg.period_months == 0 {
        return Err(Error::InvalidInput("period_months must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut train_users = Vec::new();
    let mut test_msgs: Vec<(usize, &TokenizedMessage)> = Vec::new();
    for (ui, u) in corpus.users.iter().enumerate() {
        let mut train = Vec::new();
        for m in &u.messages {
            if rng.random::<f64>() < cfg.train_fraction {
                train.push(m.clone());
            } else if m.timestamp.is_some() {
                test_msgs.push((ui, m));
            }
        }
        if !train.is_empty() {
            train_users.push(UserRecord::from_messages(u.user_id.clone(), u.age, u.gender, train));
        }
    }
    let train_corpus = UserCorpus { users: train_users, filter_config: corpus.filter_config.clone() };
    let (pipeline, _) = FittedPipeline::fit(&train_corpus, factor_cfg)?;

    let anchor = test_msgs
        .iter()
        .filter_map(|(_, m)| m.timestamp)
        .min()
        .ok_or_else(|| Error::MissingTimestamps("no timestamped messages in the test portion".into()))?;
    let period_seconds = cfg.period_months as f64 * SECONDS_PER_MONTH;
    let period_of = |ts: i64| ((ts - anchor) as f64 / period_seconds).floor() as usize;
    let n_periods = test_msgs.iter().map(|(_, m)| period_of(m.timestamp.unwrap())).max().unwrap_or(0) + 1;

    let mut buckets: Vec<Vec<Vec<TokenizedMessage>>> = vec![vec![Vec::new(); corpus.len()]; n_periods];
    for (ui, m) in test_msgs {
        buckets[period_of(m.timestamp.unwrap())][ui].push(m.clone());
    }
    let scored: Vec<(PeriodSummary, Option<FactorScores>)> = buckets
        .into_par_iter()
        .enumerate()
        .map(|(t, per_user)| {
            let users: Vec<UserRecord> = per_user
                .into_iter()
                .enumerate()
                .filter(|(_, msgs)| !msgs.is_empty())
                .map(|(ui, msgs)| {
                    let u = &corpus.users[ui];
                    UserRecord::from_messages(u.user_id.clone(), u.age, u.gender, msgs)
                })
                .filter(|r| r.total_token_count >= cfg.min_period_tokens)
                .collect();
            let period_corpus = UserCorpus { users, filter_config: corpus.filter_config.clone() };
            let scores = if period_corpus.is_empty() {
                None
            } else {
                match pipeline.score_corpus(&period_corpus) {
                    Ok(s) => Some(s),
                    Err(Error::Empty(_)) => None,
                    Err(e) => return Err(e),
                }
            };
            let start = anchor + (t as f64 * period_seconds).ceil() as i64;
            let end = anchor + ((t + 1) as f64 * period_seconds).ceil() as i64;
            Ok((
                PeriodSummary { index: t, start, end, n_users: scores.as_ref().map_or(0, |s| s.user_ids.len()) },
                scores,
            ))
        })
        .collect::<Result<_>>()?;

    let min_common = cfg.min_common_users;
    let vs_first: Vec<PeriodCorrelation> = (0..n_periods)
        .map(|t| correlate(scored[0].1.as_ref(), scored[t].1.as_ref(), 0, t, min_common))
        .collect();
    let adjacent: Vec<PeriodCorrelation> = (1..n_periods)
        .map(|t| correlate(scored[t - 1].1.as_ref(), scored[t].1.as_ref(), t - 1, t, min_common))
        .collect();
    let k = pipeline.model.k;
    let mean_cross_period_r = (0..k)
        .map(|c| {
            let vals: Vec<f64> = vs_first[1..]
                .iter()
                .filter_map(|pc| pc.r.as_ref().and_then(|r| r[c]))
                .collect();
            (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
        })
        .collect();

    let report = RetestReport {
        factor_names: pipeline.model.factor_names(),
        model_hash: pipeline.model.content_hash.clone(),
        train_fraction: cfg.train_fraction,
        seed: cfg.seed,
        n_train_users: train_corpus.len(),
        anchor,
        period_seconds,
        periods: scored.into_iter().map(|(s, _)| s).collect(),
        vs_first,
        adjacent,
        mean_cross_period_r,
    };
    Ok(RetestRun { report, pipeline })
}
