//! Collapsed Gibbs sampling for LDA with fixed symmetric priors.
//!
//! Each user's concatenated messages form one document. Hyperparameters are
//! not re-estimated during sampling.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::UserCorpus;
use crate::error::{Error, Result};
use crate::linalg::rows;
use crate::utm::Vocabulary;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LdaOptions {
    pub k: usize,
    /// Sum of the symmetric document-topic prior; each topic gets `alpha_total / k`.
    pub alpha_total: f64,
    pub beta: f64,
    pub iters: usize,
    pub seed: u64,
}

impl Default for LdaOptions {
    fn default() -> Self {
        Self {
            k: 5,
            alpha_total: 5.0,
            beta: 0.01,
            iters: 1000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicModel {
    pub k: usize,
    pub vocabulary: Vec<String>,
    pub user_ids: Vec<String>,
    /// k x V, rows sum to 1.
    #[serde(with = "rows")]
    pub topic_word: DMatrix<f64>,
    /// users x k posterior-mean proportions, rows sum to 1.
    #[serde(with = "rows")]
    pub doc_topic: DMatrix<f64>,
    pub alpha_total: f64,
    pub beta: f64,
    pub iterations: usize,
    pub seed: u64,
    pub hyperparameter_optimization: bool,
    /// Users skipped because they have no in-vocabulary tokens.
    pub skipped_users: Vec<String>,
}

impl TopicModel {
    /// Population covariance of per-user topic proportions (k x k).
    pub fn proportion_covariance(&self) -> DMatrix<f64> {
        let n = self.doc_topic.nrows() as f64;
        let means = self.doc_topic.row_mean();
        let centered = DMatrix::from_fn(self.doc_topic.nrows(), self.k, |i, j| {
            self.doc_topic[(i, j)] - means[j]
        });
        centered.tr_mul(&centered) / n
    }

    pub fn proportion_correlation(&self) -> DMatrix<f64> {
        crate::linalg::cross_correlation(&self.doc_topic, &self.doc_topic)
    }
}

pub fn fit_lda(corpus: &UserCorpus, vocab: &Vocabulary, opts: &LdaOptions) -> Result<TopicModel> {
    let k = opts.k;
    if k < 2 {
        return Err(Error::InvalidInput("LDA needs at least 2 topics".into()));
    }
    if !(opts.alpha_total > 0.0 && opts.beta > 0.0) {
        return Err(Error::InvalidInput("alpha_total and beta must be positive".into()));
    }
    let v = vocab.len();
    if v == 0 {
        return Err(Error::Empty("vocabulary".into()));
    }

    let mut docs: Vec<Vec<usize>> = Vec::new();
    let mut user_ids = Vec::new();
    let mut skipped = Vec::new();
    for u in &corpus.users {
        let doc: Vec<usize> = u
            .messages
            .iter()
            .flat_map(|m| m.tokens.iter())
            .filter_map(|t| vocab.index_of(t))
            .collect();
        if doc.is_empty() {
            skipped.push(u.user_id.clone());
        } else {
            docs.push(doc);
            user_ids.push(u.user_id.clone());
        }
    }
    if docs.is_empty() {
        return Err(Error::Empty("LDA corpus: no documents with in-vocabulary tokens".into()));
    }

    let alpha = opts.alpha_total / k as f64;
    let beta = opts.beta;
    let vbeta = v as f64 * beta;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);

    let mut n_dk = vec![vec![0u32; k]; docs.len()];
    let mut n_kw = vec![0u32; k * v];
    let mut n_k = vec![0u32; k];
    let mut assign: Vec<Vec<usize>> = docs
        .iter()
        .enumerate()
        .map(|(d, doc)| {
            doc.iter()
                .map(|&w| {
                    let t = rng.random_range(0..k);
                    n_dk[d][t] += 1;
                    n_kw[t * v + w] += 1;
                    n_k[t] += 1;
                    t
                })
                .collect()
        })
        .collect();

    let mut weights = vec![0.0f64; k];
    for _ in 0..opts.iters {
        for (d, doc) in docs.iter().enumerate() {
            for (i, &w) in doc.iter().enumerate() {
                let old = assign[d][i];
                n_dk[d][old] -= 1;
                n_kw[old * v + w] -= 1;
                n_k[old] -= 1;
                let mut total = 0.0;
                for t in 0..k {
                    total += (n_dk[d][t] as f64 + alpha) * (n_kw[t * v + w] as f64 + beta)
                        / (n_k[t] as f64 + vbeta);
                    weights[t] = total;
                }
                let u = rng.random::<f64>() * total;
                let new = weights.iter().position(|&c| u < c).unwrap_or(k - 1);
                assign[d][i] = new;
                n_dk[d][new] += 1;
                n_kw[new * v + w] += 1;
                n_k[new] += 1;
            }
        }
    }

    let mut doc_topic = DMatrix::zeros(docs.len(), k);
    for (d, doc) in docs.iter().enumerate() {
        let denom = doc.len() as f64 + opts.alpha_total;
        let mut row: Vec<f64> = (0..k).map(|t| (n_dk[d][t] as f64 + alpha) / denom).collect();
        let s: f64 = row.iter().sum();
        row.iter_mut().for_each(|x| *x /= s);
        for t in 0..k {
            doc_topic[(d, t)] = row[t];
        }
    }
    let topic_word = DMatrix::from_fn(k, v, |t, w| {
        (n_kw[t * v + w] as f64 + beta) / (n_k[t] as f64 + vbeta)
    });

    Ok(TopicModel {
        k,
        vocabulary: vocab.terms().to_vec(),
        user_ids,
        topic_word,
        doc_topic,
        alpha_total: opts.alpha_total,
        beta,
        iterations: opts.iters,
        seed: opts.seed,
        hyperparameter_optimization: false,
        skipped_users: skipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{build_corpus, DemographicsTable, FilterConfig, Message, Tokenizer};

    /// Users 0..n each draw only from their block's 5 words.
    fn block_corpus(blocks: usize, users_per_block: usize) -> (UserCorpus, Vocabulary) {
        let mut msgs = Vec::new();
        let mut terms = Vec::new();
        for b in 0..blocks {
            for w in 0..5 {
                terms.push(format!("b{b}w{w}"));
            }
            for u in 0..users_per_block {
                let text: Vec<String> = (0..40).map(|i| format!("b{b}w{}", (i * 7 + u) % 5)).collect();
                msgs.push(Message {
                    user_id: format!("u{b}_{u:02}"),
                    text: text.join(" "),
                    timestamp: None,
                });
            }
        }
        let (c, _) = build_corpus(&msgs, &DemographicsTable::new(), &FilterConfig::permissive(), &Tokenizer::new(vec![], vec![]));
        (c, Vocabulary::new(terms).unwrap())
    }

    #[test]
    fn separable_corpus_recovers_blocks() {
        let (c, v) = block_corpus(3, 10);
        let m = fit_lda(&c, &v, &LdaOptions { k: 3, alpha_total: 0.3, beta: 0.01, iters: 200, seed: 1 }).unwrap();
        for d in 0..m.doc_topic.nrows() {
            let top = m.doc_topic.row(d).iter().cloned().fold(0.0, f64::max);
            assert!(top > 0.8, "user {d} top proportion {top}");
        }
    }

    #[test]
    fn proportions_sum_to_one_and_compositional_identity() {
        let (c, v) = block_corpus(3, 6);
        for seed in 0..3 {
            let m = fit_lda(&c, &v, &LdaOptions { k: 4, iters: 30, seed, ..Default::default() }).unwrap();
            for d in 0..m.doc_topic.nrows() {
                assert!((m.doc_topic.row(d).sum() - 1.0).abs() < 1e-9);
            }
            for t in 0..m.k {
                assert!((m.topic_word.row(t).sum() - 1.0).abs() < 1e-9);
            }
            let cov = m.proportion_covariance();
            let var: f64 = (0..m.k).map(|i| cov[(i, i)]).sum();
            let off: f64 = cov.sum() - var;
            assert!((off + var).abs() < 1e-9);
        }
    }

    #[test]
    fn deterministic_for_seed() {
        let (c, v) = block_corpus(2, 5);
        let o = LdaOptions { k: 2, iters: 20, seed: 9, ..Default::default() };
        assert_eq!(fit_lda(&c, &v, &o).unwrap(), fit_lda(&c, &v, &o).unwrap());
    }

    #[test]
    fn rejects_single_topic() {
        let (c, v) = block_corpus(2, 2);
        assert!(fit_lda(&c, &v, &LdaOptions { k: 1, ..Default::default() }).is_err());
    }
}
