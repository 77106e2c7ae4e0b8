//! User-term matrix construction, column standardization and demographic
//! residualization.

use std::collections::HashMap;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::corpus::UserCorpus;
use crate::csr::CsrMatrix;
use crate::error::{Error, Result};
use crate::io::{read_json, sha256_hex, write_atomic, write_json};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    terms: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    pub fn new(terms: Vec<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(terms.len());
        for (i, t) in terms.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(Error::InvalidInput(format!("duplicate vocabulary term {t:?}")));
            }
        }
        Ok(Self { terms, index })
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn index_of(&self, term: &str) -> Option<usize> {
        self.index.get(term).copied()
    }

    /// Stable content hash used to check stats / model compatibility.
    pub fn hash(&self) -> String {
        sha256_hex(self.terms.join("\n").as_bytes())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VocabularyConfig {
    pub max_terms: usize,
    pub min_user_fraction: f64,
}

impl Default for VocabularyConfig {
    fn default() -> Self {
        Self {
            max_terms: 10_000,
            min_user_fraction: 0.01,
        }
    }
}

/// Tokens used by at least `min_user_fraction` of users, ranked by number of
/// distinct users (ties lexicographic), truncated to `max_terms`.
pub fn select_vocabulary(corpus: &UserCorpus, cfg: &VocabularyConfig) -> Result<Vocabulary> {
    if !(cfg.min_user_fraction > 0.0 && cfg.min_user_fraction <= 1.0) {
        return Err(Error::InvalidInput(format!(
            "min_user_fraction must be in (0, 1], got {}",
            cfg.min_user_fraction
        )));
    }
    let mut doc_freq: HashMap<&str, usize> = HashMap::new();
    for u in &corpus.users {
        for t in u.tokens.keys() {
            *doc_freq.entry(t.as_str()).or_default() += 1;
        }
    }
    let threshold = cfg.min_user_fraction * corpus.len() as f64;
    let mut ranked: Vec<(&str, usize)> = doc_freq
        .into_iter()
        .filter(|&(_, c)| c as f64 >= threshold)
        .collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    ranked.truncate(cfg.max_terms);
    if ranked.is_empty() {
        return Err(Error::Empty(
            "vocabulary: thresholds exclude every token".into(),
        ));
    }
    Vocabulary::new(ranked.into_iter().map(|(t, _)| t.to_string()).collect())
}

/// Users x vocabulary relative frequencies, `count(u, t) / total_tokens(u)`.
#[derive(Debug, Clone)]
pub struct UserTermMatrix {
    pub user_ids: Vec<String>,
    pub vocabulary: Vocabulary,
    pub values: CsrMatrix,
    pub counts: CsrMatrix,
    pub total_tokens: Vec<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MatrixReport {
    /// Users dropped because none of their tokens are in the vocabulary.
    pub dropped_users: Vec<String>,
}

pub fn build_matrix(
    corpus: &UserCorpus,
    vocabulary: &Vocabulary,
) -> Result<(UserTermMatrix, MatrixReport)> {
    if vocabulary.is_empty() {
        return Err(Error::Empty("vocabulary".into()));
    }
    let mut report = MatrixReport::default();
    let mut user_ids = Vec::new();
    let mut freq_rows = Vec::new();
    let mut count_rows = Vec::new();
    let mut totals = Vec::new();
    for u in &corpus.users {
        let mut row: Vec<(usize, f64)> = u
            .tokens
            .iter()
            .filter_map(|(t, &c)| vocabulary.index_of(t).map(|j| (j, c as f64)))
            .collect();
        if row.is_empty() || u.total_token_count == 0 {
            report.dropped_users.push(u.user_id.clone());
            continue;
        }
        row.sort_by_key(|&(j, _)| j);
        let total = u.total_token_count as f64;
        freq_rows.push(row.iter().map(|&(j, c)| (j, c / total)).collect());
        count_rows.push(row);
        user_ids.push(u.user_id.clone());
        totals.push(u.total_token_count);
    }
    let p = vocabulary.len();
    Ok((
        UserTermMatrix {
            user_ids,
            vocabulary: vocabulary.clone(),
            values: CsrMatrix::from_rows(p, freq_rows)?,
            counts: CsrMatrix::from_rows(p, count_rows)?,
            total_tokens: totals,
        },
        report,
    ))
}

impl UserTermMatrix {
    pub fn n_users(&self) -> usize {
        self.user_ids.len()
    }

    pub fn n_terms(&self) -> usize {
        self.vocabulary.len()
    }

    pub fn select_rows(&self, rows: &[usize]) -> Self {
        Self {
            user_ids: rows.iter().map(|&i| self.user_ids[i].clone()).collect(),
            vocabulary: self.vocabulary.clone(),
            values: self.values.select_rows(rows),
            counts: self.counts.select_rows(rows),
            total_tokens: rows.iter().map(|&i| self.total_tokens[i]).collect(),
        }
    }

    /// Persist as `vocabulary.txt`, `users.txt`, `matrix.csr` and (when given)
    /// `stats.json` inside `dir`.
    pub fn save(&self, dir: &Path, stats: Option<&ColumnStats>) -> Result<()> {
        let mut vocab = self.vocabulary.terms().join("\n");
        vocab.push('\n');
        write_atomic(&dir.join("vocabulary.txt"), vocab.as_bytes())?;
        let mut users = self.user_ids.join("\n");
        users.push('\n');
        write_atomic(&dir.join("users.txt"), users.as_bytes())?;
        self.values.save(&dir.join("matrix.csr"))?;
        if let Some(s) = stats {
            write_json(&dir.join("stats.json"), s)?;
        }
        Ok(())
    }

    /// Load a matrix directory written by [`UserTermMatrix::save`]. Raw counts
    /// are not persisted, so `counts` mirrors `values` and totals are zero.
    pub fn load(dir: &Path) -> Result<(Self, Option<ColumnStats>)> {
        let read_lines = |name: &str| -> Result<Vec<String>> {
            let p = dir.join(name);
            let text = std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
            Ok(text.lines().map(str::to_string).collect())
        };
        let vocabulary = Vocabulary::new(read_lines("vocabulary.txt")?)?;
        let user_ids = read_lines("users.txt")?;
        let values = CsrMatrix::load(&dir.join("matrix.csr"))?;
        if values.nrows() != user_ids.len() || values.ncols() != vocabulary.len() {
            return Err(Error::Dimension(format!(
                "matrix.csr is {}x{} but users.txt/vocabulary.txt give {}x{}",
                values.nrows(),
                values.ncols(),
                user_ids.len(),
                vocabulary.len()
            )));
        }
        let stats_path = dir.join("stats.json");
        let stats = if stats_path.exists() {
            Some(read_json(&stats_path)?)
        } else {
            None
        };
        let n = user_ids.len();
        Ok((
            Self {
                user_ids,
                vocabulary,
                counts: values.clone(),
                values,
                total_tokens: vec![0; n],
            },
            stats,
        ))
    }
}

/// Training-set column means and population standard deviations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnStats {
    pub vocabulary_hash: String,
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

impl ColumnStats {
    pub fn zero_variance_columns(&self) -> Vec<usize> {
        self.stds
            .iter()
            .enumerate()
            .filter(|(_, &s)| s == 0.0)
            .map(|(j, _)| j)
            .collect()
    }
}

/// Dense column-standardized matrix with the statistics used to produce it.
#[derive(Debug, Clone)]
pub struct StandardizedMatrix {
    pub user_ids: Vec<String>,
    pub vocabulary: Vocabulary,
    /// users x terms.
    pub z: DMatrix<f64>,
    pub stats: ColumnStats,
}

impl StandardizedMatrix {
    /// Standardize a dense users x terms matrix with freshly computed statistics.
    pub fn from_dense(user_ids: Vec<String>, vocabulary: Vocabulary, dense: &DMatrix<f64>) -> Result<Self> {
        if user_ids.len() != dense.nrows() || vocabulary.len() != dense.ncols() {
            return Err(Error::Dimension(format!(
                "{} users x {} terms vs a {}x{} matrix",
                user_ids.len(),
                vocabulary.len(),
                dense.nrows(),
                dense.ncols()
            )));
        }
        let stats = column_stats(dense, &vocabulary);
        Ok(Self {
            user_ids,
            z: apply_stats(dense, &stats),
            vocabulary,
            stats,
        })
    }

    /// Standardize `dense` with these training statistics.
    pub fn with_stats(&self, user_ids: Vec<String>, dense: &DMatrix<f64>) -> Result<Self> {
        if dense.ncols() != self.vocabulary.len() || user_ids.len() != dense.nrows() {
            return Err(Error::Dimension("held-out matrix shape".into()));
        }
        Ok(Self {
            user_ids,
            z: apply_stats(dense, &self.stats),
            vocabulary: self.vocabulary.clone(),
            stats: self.stats.clone(),
        })
    }
}

/// z-score every column. With `stats` (held-out mode) the supplied training
/// statistics are used; otherwise they are computed from `matrix`.
/// Zero-variance columns map to zeros.
pub fn standardize(
    matrix: &UserTermMatrix,
    stats: Option<&ColumnStats>,
) -> Result<StandardizedMatrix> {
    let dense = matrix.values.to_dense();
    let stats = match stats {
        Some(s) => {
            if s.vocabulary_hash != matrix.vocabulary.hash() || s.means.len() != matrix.n_terms() {
                return Err(Error::VocabularyMismatch(
                    "column statistics were computed for a different vocabulary".into(),
                ));
            }
            s.clone()
        }
        None => column_stats(&dense, &matrix.vocabulary),
    };
    let z = apply_stats(&dense, &stats);
    Ok(StandardizedMatrix {
        user_ids: matrix.user_ids.clone(),
        vocabulary: matrix.vocabulary.clone(),
        z,
        stats,
    })
}

pub fn column_stats(dense: &DMatrix<f64>, vocabulary: &Vocabulary) -> ColumnStats {
    let n = dense.nrows().max(1) as f64;
    let mut means = Vec::with_capacity(dense.ncols());
    let mut stds = Vec::with_capacity(dense.ncols());
    for col in dense.column_iter() {
        let m = col.iter().sum::<f64>() / n;
        let var = col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n;
        means.push(m);
        // Treat round-off level variance as constant.
        stds.push(if var > 1e-300 && var.sqrt() > 1e-12 * m.abs() { var.sqrt() } else { 0.0 });
    }
    ColumnStats {
        vocabulary_hash: vocabulary.hash(),
        means,
        stds,
    }
}

pub fn apply_stats(dense: &DMatrix<f64>, stats: &ColumnStats) -> DMatrix<f64> {
    DMatrix::from_fn(dense.nrows(), dense.ncols(), |i, j| {
        let s = stats.stds[j];
        if s == 0.0 {
            0.0
        } else {
            (dense[(i, j)] - stats.means[j]) / s
        }
    })
}

/// Per-user covariates for residualization: centered age and a 0/1 gender
/// indicator (female = 1).
#[derive(Debug, Clone, PartialEq)]
pub struct Covariates {
    pub user_ids: Vec<String>,
    pub age_centered: Vec<f64>,
    pub gender: Vec<f64>,
}

impl Covariates {
    /// Covariates for `user_ids` drawn from `corpus`. Missing ages are imputed
    /// with the mean age and unknown gender with 0.5.
    pub fn from_corpus(corpus: &UserCorpus, user_ids: &[String]) -> Result<Self> {
        let mut ages = Vec::with_capacity(user_ids.len());
        let mut genders = Vec::with_capacity(user_ids.len());
        for id in user_ids {
            let u = corpus
                .get(id)
                .ok_or_else(|| Error::UserMismatch(format!("user {id} not in corpus")))?;
            ages.push(u.age);
            genders.push(u.gender.indicator());
        }
        Ok(Self::from_raw(user_ids.to_vec(), &ages, &genders))
    }

    pub fn from_raw(user_ids: Vec<String>, ages: &[Option<f64>], genders: &[Option<f64>]) -> Self {
        let known: Vec<f64> = ages.iter().flatten().copied().collect();
        let mean_age = if known.is_empty() {
            0.0
        } else {
            known.iter().sum::<f64>() / known.len() as f64
        };
        Self {
            user_ids,
            age_centered: ages.iter().map(|a| a.unwrap_or(mean_age) - mean_age).collect(),
            gender: genders.iter().map(|g| g.unwrap_or(0.5)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.user_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.user_ids.is_empty()
    }

    /// `[age, gender]` feature columns.
    pub fn feature_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.len(), 2, |i, j| {
            if j == 0 {
                self.age_centered[i]
            } else {
                self.gender[i]
            }
        })
    }

    pub fn select(&self, ids: &[String]) -> Result<Self> {
        let pos: HashMap<&str, usize> = self
            .user_ids
            .iter()
            .enumerate()
            .map(|(i, u)| (u.as_str(), i))
            .collect();
        let mut out = Self {
            user_ids: Vec::new(),
            age_centered: Vec::new(),
            gender: Vec::new(),
        };
        for id in ids {
            let &i = pos
                .get(id.as_str())
                .ok_or_else(|| Error::UserMismatch(format!("no covariates for user {id}")))?;
            out.user_ids.push(id.clone());
            out.age_centered.push(self.age_centered[i]);
            out.gender.push(self.gender[i]);
        }
        Ok(out)
    }
}

#[derive(Debug, Clone)]
pub struct Residualized {
    pub values: DMatrix<f64>,
    /// Regressors dropped for rank deficiency, e.g. `"age"`.
    pub dropped_regressors: Vec<String>,
}

/// Replace every column with its OLS residuals on `[intercept, age, gender]`.
/// Rank-deficient regressors are dropped with a warning.
pub fn residualize(values: &DMatrix<f64>, demo: &Covariates) -> Result<Residualized> {
    let n = values.nrows();
    if demo.len() != n {
        return Err(Error::Dimension(format!(
            "{} rows but {} covariate rows",
            n,
            demo.len()
        )));
    }
    let candidates = [
        ("intercept", DVector::from_element(n, 1.0)),
        ("age", DVector::from_vec(demo.age_centered.clone())),
        ("gender", DVector::from_vec(demo.gender.clone())),
    ];
    // Modified Gram-Schmidt with one re-orthogonalization pass.
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut dropped = Vec::new();
    for (name, col) in candidates {
        let norm0 = col.norm();
        let mut v = col;
        for _ in 0..2 {
            for q in &basis {
                let d = q.dot(&v);
                v -= q * d;
            }
        }
        let norm = v.norm();
        if norm0 == 0.0 || norm <= 1e-10 * norm0.max(1.0) {
            log::warn!("residualize: dropping rank-deficient regressor {name}");
            dropped.push(name.to_string());
            continue;
        }
        basis.push(v / norm);
    }
    let mut out = values.clone();
    for j in 0..out.ncols() {
        let mut col = out.column(j).into_owned();
        for _ in 0..2 {
            for q in &basis {
                let d = q.dot(&col);
                col -= q * d;
            }
        }
        out.set_column(j, &col);
    }
    Ok(Residualized {
        values: out,
        dropped_regressors: dropped,
    })
}
