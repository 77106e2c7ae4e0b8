//! Synthetic corpora with planted latent factors.
//!
//! Each user has factor values `f`; term `j` loads on one factor with sign
//! `s_j`, and its log-intensity for user `u` is
//! `b_j + loading * s_j * f[u, c(j)] + noise * e[u, j]`. Tokens are drawn
//! from the resulting multinomial. Transient factors carry signal only in
//! period 0.

use std::path::Path;

use nalgebra::DMatrix;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::corpus::{build_corpus, DemographicRow, DemographicsTable, FilterConfig, Gender, Message, Tokenizer, UserCorpus};
use crate::error::{Error, Result};
use crate::io::{table_to_csv, write_atomic, write_json};
use crate::linalg::rows;

/// Seconds per retest window month.
pub const SECONDS_PER_MONTH: f64 = 30.44 * 86_400.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FixtureConfig {
    pub users: usize,
    pub terms: usize,
    pub k: usize,
    /// Std of the user x term log-intensity noise.
    pub noise: f64,
    /// Scale of a factor's effect on a loaded term's log-intensity.
    pub loading: f64,
    /// Common correlation between planted factors.
    pub factor_corr: f64,
    /// Factors whose signal exists only in period 0.
    pub transient: Vec<usize>,
    /// Number of time periods; 0 produces messages without timestamps.
    pub periods: usize,
    pub period_months: u32,
    /// Tokens per user overall (`periods == 0`) or per period.
    pub tokens: usize,
    pub message_len: usize,
    pub start_time: i64,
    pub likes_per_user: usize,
    pub items_per_cluster: usize,
    pub seed: u64,
}

impl Default for FixtureConfig {
    fn default() -> Self {
        Self {
            users: 500,
            terms: 2000,
            k: 5,
            noise: 0.5,
            loading: 0.5,
            factor_corr: 0.0,
            transient: vec![],
            periods: 0,
            period_months: 6,
            tokens: 4000,
            message_len: 40,
            start_time: 1_262_304_000,
            likes_per_user: 30,
            items_per_cluster: 40,
            seed: 0,
        }
    }
}

/// Ground truth of a generated fixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedTruth {
    pub config: FixtureConfig,
    pub factor_names: Vec<String>,
    pub user_ids: Vec<String>,
    /// users x k planted factor values.
    #[serde(with = "rows")]
    pub scores: DMatrix<f64>,
    pub terms: Vec<String>,
    /// Factor each term loads on.
    pub term_factor: Vec<usize>,
    pub term_sign: Vec<f64>,
    /// Dominant like cluster per user.
    pub like_cluster: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct Fixture {
    pub messages: Vec<Message>,
    /// `(user_id, age, gender)` with gender `"female"`/`"male"`.
    pub demographics: Vec<(String, f64, &'static str)>,
    pub outcome_names: Vec<String>,
    /// users x outcomes
    pub outcomes: DMatrix<f64>,
    pub likes: Vec<(String, String)>,
    pub truth: PlantedTruth,
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn cumulative(weights: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    weights
        .iter()
        .map(|w| {
            acc += w;
            acc
        })
        .collect()
}

fn draw(cdf: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let u = rng.random::<f64>() * cdf[cdf.len() - 1];
    cdf.partition_point(|&c| c <= u).min(cdf.len() - 1)
}

pub fn generate(cfg: &FixtureConfig) -> Result<Fixture> {
    let (n, p, k) = (cfg.users, cfg.terms, cfg.k);
    if n < 2 || k == 0 || p < k {
        return Err(Error::InvalidInput(format!(
            "fixture needs users >= 2, k >= 1 and terms >= k (got {n}, {k}, {p})"
        )));
    }
    if !(0.0..1.0).contains(&cfg.factor_corr) {
        return Err(Error::InvalidInput("factor_corr must be in [0, 1)".into()));
    }
    if let Some(&t) = cfg.transient.iter().find(|&&t| t >= k) {
        return Err(Error::InvalidInput(format!("transient factor {t} out of range")));
    }
    if cfg.tokens == 0 || cfg.message_len == 0 {
        return Err(Error::InvalidInput("tokens and message_len must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let user_ids: Vec<String> = (0..n).map(|i| format!("user{i:05}")).collect();
    let terms: Vec<String> = (0..p).map(|j| format!("w{j:05}")).collect();
    let term_factor: Vec<usize> = (0..p).map(|j| j % k).collect();
    let term_sign: Vec<f64> = (0..p).map(|j| if (j / k) % 2 == 0 { 1.0 } else { -1.0 }).collect();
    let base: Vec<f64> = (0..p).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();

    let (a, b) = (cfg.factor_corr.sqrt(), (1.0 - cfg.factor_corr).sqrt());
    let mut scores = DMatrix::zeros(n, k);
    for i in 0..n {
        let shared = normal(&mut rng);
        for c in 0..k {
            scores[(i, c)] = a * shared + b * normal(&mut rng);
        }
    }
    let user_noise = DMatrix::from_fn(n, p, |_, _| cfg.noise * normal(&mut rng));

    let periods = cfg.periods.max(1);
    let period_len = cfg.period_months as f64 * SECONDS_PER_MONTH;
    let mut messages = Vec::new();
    let mut user_rngs: Vec<ChaCha8Rng> = (0..n).map(|i| ChaCha8Rng::seed_from_u64(cfg.seed ^ (0xA5A5_0000 + i as u64))).collect();
    for (i, urng) in user_rngs.iter_mut().enumerate() {
        for period in 0..periods {
            let weights: Vec<f64> = (0..p)
                .map(|j| {
                    let c = term_factor[j];
                    let f = if period > 0 && cfg.transient.contains(&c) { 0.0 } else { scores[(i, c)] };
                    (base[j] + cfg.loading * term_sign[j] * f + user_noise[(i, j)]).exp()
                })
                .collect();
            let cdf = cumulative(&weights);
            let mut tokens: Vec<usize> = (0..cfg.tokens).map(|_| draw(&cdf, urng)).collect();
            tokens.shuffle(urng);
            for chunk in tokens.chunks(cfg.message_len) {
                let text = chunk.iter().map(|&j| terms[j].as_str()).collect::<Vec<_>>().join(" ");
                let timestamp = (cfg.periods > 0).then(|| {
                    cfg.start_time + (period as f64 * period_len + urng.random::<f64>() * (period_len - 1.0)) as i64
                });
                messages.push(Message {
                    user_id: user_ids[i].clone(),
                    text,
                    timestamp,
                });
            }
        }
    }

    let mut demographics = Vec::with_capacity(n);
    let mut ages = Vec::with_capacity(n);
    let mut female = Vec::with_capacity(n);
    for id in &user_ids {
        let age = (18.0 + rng.random::<f64>() * 46.0).round();
        let g = rng.random::<bool>();
        ages.push(age);
        female.push(g as u8 as f64);
        demographics.push((id.clone(), age, if g { "female" } else { "male" }));
    }

    let f = |i: usize, c: usize| scores[(i, c.min(k - 1))];
    let outcome_names: Vec<String> = ["trait_f1", "trait_demog", "log_income", "binary_f2"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let mut outcomes = DMatrix::zeros(n, outcome_names.len());
    for i in 0..n {
        outcomes[(i, 0)] = f(i, 0) + 0.5 * normal(&mut rng);
        outcomes[(i, 1)] = 0.08 * (ages[i] - 40.0) + 0.8 * female[i] + 0.3 * f(i, 1) + 0.5 * normal(&mut rng);
        outcomes[(i, 2)] = 10.0 + 0.3 * f(i, 2) + 0.02 * ages[i] + 0.4 * normal(&mut rng);
        outcomes[(i, 3)] = (f(i, 1) + 0.7 * normal(&mut rng) > 0.0) as u8 as f64;
    }

    let clusters = k;
    let items = cfg.items_per_cluster.max(1);
    let all_items: Vec<usize> = (0..clusters * items).collect();
    let mut like_cluster = Vec::with_capacity(n);
    let mut likes = Vec::new();
    for (i, id) in user_ids.iter().enumerate() {
        let dom = (0..k).fold(0, |best, c| if scores[(i, c)] > scores[(i, best)] { c } else { best });
        like_cluster.push(dom);
        let own: Vec<usize> = (dom * items..(dom + 1) * items).collect();
        let mut chosen = std::collections::BTreeSet::new();
        for _ in 0..cfg.likes_per_user {
            let pool = if rng.random::<f64>() < 0.8 { &own } else { &all_items };
            chosen.insert(*pool.choose(&mut rng).expect("non-empty pool"));
        }
        for item in chosen {
            likes.push((id.clone(), format!("like{item:05}")));
        }
    }

    Ok(Fixture {
        messages,
        demographics,
        outcome_names,
        outcomes,
        likes,
        truth: PlantedTruth {
            config: cfg.clone(),
            factor_names: (1..=k).map(|c| format!("P{c}")).collect(),
            user_ids,
            scores,
            terms,
            term_factor,
            term_sign,
            like_cluster,
        },
    })
}

impl Fixture {
    pub fn demographics_table(&self) -> DemographicsTable {
        self.demographics
            .iter()
            .map(|(id, age, g)| {
                (id.clone(), DemographicRow { age: Some(*age), gender: Gender::parse(g), include: None })
            })
            .collect()
    }

    /// In-memory corpus with no user filtering.
    pub fn corpus(&self) -> UserCorpus {
        let tokenizer = Tokenizer::new(Vec::new(), Vec::new());
        build_corpus(&self.messages, &self.demographics_table(), &FilterConfig::permissive(), &tokenizer).0
    }

    /// Write `messages.jsonl`, `demographics.csv`, `outcomes.csv`,
    /// `likes.csv`, `planted.json` and `planted_scores.csv` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut buf = Vec::new();
        for m in &self.messages {
            serde_json::to_writer(&mut buf, m)?;
            buf.push(b'\n');
        }
        write_atomic(&dir.join("messages.jsonl"), &buf)?;

        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["user_id", "age", "gender"])?;
        for (id, age, g) in &self.demographics {
            w.write_record([id.as_str(), &age.to_string(), g])?;
        }
        write_atomic(&dir.join("demographics.csv"), &into_bytes(w)?)?;

        let ids = &self.truth.user_ids;
        write_atomic(&dir.join("outcomes.csv"), &table_to_csv("user_id", ids, &self.outcome_names, &self.outcomes)?)?;

        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["user_id", "like_id"])?;
        for (u, l) in &self.likes {
            w.write_record([u, l])?;
        }
        write_atomic(&dir.join("likes.csv"), &into_bytes(w)?)?;

        write_json(&dir.join("planted.json"), &self.truth)?;
        write_atomic(
            &dir.join("planted_scores.csv"),
            &table_to_csv("user_id", ids, &self.truth.factor_names, &self.truth.scores)?,
        )
    }
}

fn into_bytes(w: csv::Writer<Vec<u8>>) -> Result<Vec<u8>> {
    w.into_inner().map_err(|e| Error::InvalidInput(format!("csv flush: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> FixtureConfig {
        FixtureConfig { users: 20, terms: 30, k: 3, tokens: 200, ..Default::default() }
    }

    #[test]
    fn deterministic() {
        let a = generate(&small()).unwrap();
        let b = generate(&small()).unwrap();
        assert_eq!(a.messages, b.messages);
        assert_eq!(a.truth, b.truth);
        assert_eq!(a.likes, b.likes);
    }

    #[test]
    fn token_and_period_counts() {
        let cfg = FixtureConfig { periods: 3, tokens: 100, message_len: 30, ..small() };
        let fx = generate(&cfg).unwrap();
        let first: Vec<&Message> = fx.messages.iter().filter(|m| m.user_id == "user00000").collect();
        let n_tokens: usize = first.iter().map(|m| m.text.split(' ').count()).sum();
        assert_eq!(n_tokens, 300);
        let len = 6.0 * SECONDS_PER_MONTH;
        for m in &fx.messages {
            let t = m.timestamp.unwrap() - cfg.start_time;
            assert!(t >= 0 && (t as f64) < 3.0 * len);
        }
    }

    #[test]
    fn rejects_bad_config() {
        assert!(generate(&FixtureConfig { transient: vec![5], ..small() }).is_err());
        assert!(generate(&FixtureConfig { factor_corr: 1.0, ..small() }).is_err());
    }

    #[test]
    fn writes_all_files() {
        let dir = tempfile::tempdir().unwrap();
        generate(&small()).unwrap().write(dir.path()).unwrap();
        for f in ["messages.jsonl", "demographics.csv", "outcomes.csv", "likes.csv", "planted.json", "planted_scores.csv"] {
            assert!(dir.path().join(f).exists(), "{f}");
        }
    }
}
