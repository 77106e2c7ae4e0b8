use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::factors::FactorScores;
use crate::utm::{residualize, Covariates, UserTermMatrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DlaEntry {
    pub token: String,
    pub r: f64,
    /// Mean relative frequency across users.
    pub frequency: f64,
    /// Frequency tercile over the vocabulary (1 = rarest), for plot sizing.
    pub frequency_tier: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorDla {
    pub factor: String,
    /// Highest correlations, descending.
    pub positive: Vec<DlaEntry>,
    /// Lowest correlations, ascending.
    pub negative: Vec<DlaEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DlaReport {
    pub n_users: usize,
    pub top_n: usize,
    /// Covariates partialled out of both sides, e.g. `["age", "gender"]`.
    pub controls: Vec<String>,
    /// Tokens skipped because their column is constant.
    pub skipped_constant: Vec<String>,
    pub factors: Vec<FactorDla>,
}

impl DlaReport {
    /// `factor,token,r,frequency` rows for word-cloud tooling.
    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["factor", "token", "r", "frequency"])?;
        for f in &self.factors {
            for e in f.positive.iter().chain(&f.negative) {
                w.write_record([f.factor.as_str(), &e.token, &e.r.to_string(), &e.frequency.to_string()])?;
            }
        }
        w.into_inner().map_err(|e| Error::InvalidInput(format!("csv flush: {e}")))
    }
}

fn column_moments(m: &DMatrix<f64>) -> Vec<(f64, f64)> {
    let n = m.nrows() as f64;
    m.column_iter()
        .map(|c| {
            let mean = c.sum() / n;
            let ss: f64 = c.iter().map(|v| (v - mean) * (v - mean)).sum();
            (mean, ss)
        })
        .collect()
}

/// Correlate every token's relative frequency with every factor score.
/// With `controls`, both sides are residualized on age and gender first.
pub fn dla(
    matrix: &UserTermMatrix,
    scores: &FactorScores,
    top_n: usize,
    controls: Option<&Covariates>,
) -> Result<DlaReport> {
    if matrix.user_ids != scores.user_ids {
        return Err(Error::UserMismatch("matrix and scores must list the same users in order".into()));
    }
    if matrix.n_users() < 3 {
        return Err(Error::InvalidInput("differential analysis needs at least 3 users".into()));
    }
    let raw = matrix.values.to_dense();
    let n = raw.nrows() as f64;
    let frequency: Vec<f64> = raw.column_iter().map(|c| c.sum() / n).collect();
    let (x, s, control_names) = match controls {
        Some(cov) => {
            let cov = cov.select(&matrix.user_ids)?;
            let x = residualize(&raw, &cov)?.values;
            let s = residualize(&scores.scores, &cov)?.values;
            (x, s, vec!["age".to_string(), "gender".to_string()])
        }
        None => (raw, scores.scores.clone(), vec![]),
    };

    let xm = column_moments(&x);
    let sm = column_moments(&s);
    let terms = matrix.vocabulary.terms();
    let scale = |mean: f64, ss: f64| ss > 1e-24 * (1.0 + mean * mean) * n;
    let skipped: Vec<String> = (0..terms.len())
        .filter(|&j| !scale(xm[j].0, xm[j].1))
        .map(|j| terms[j].clone())
        .collect();

    let mut sorted_freq = frequency.clone();
    sorted_freq.sort_by(f64::total_cmp);
    let cut = |q: usize| sorted_freq[(sorted_freq.len() * q / 3).min(sorted_freq.len() - 1)];
    let (t1, t2) = (cut(1), cut(2));
    let tier = |f: f64| if f < t1 { 1 } else if f < t2 { 2 } else { 3 };

    let xc = DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| x[(i, j)] - xm[j].0);
    let mut factors = Vec::with_capacity(s.ncols());
    for (c, name) in scores.factor_names.iter().enumerate() {
        let (smean, sss) = sm[c];
        let mut entries = Vec::new();
        if scale(smean, sss) {
            let sc: Vec<f64> = s.column(c).iter().map(|v| v - smean).collect();
            for j in 0..terms.len() {
                if !scale(xm[j].0, xm[j].1) {
                    continue;
                }
                let sxy: f64 = xc.column(j).iter().zip(&sc).map(|(a, b)| a * b).sum();
                let r = (sxy / (xm[j].1 * sss).sqrt()).clamp(-1.0, 1.0);
                entries.push(DlaEntry {
                    token: terms[j].clone(),
                    r,
                    frequency: frequency[j],
                    frequency_tier: tier(frequency[j]),
                });
            }
        } else {
            log::warn!("dla: factor {name} has constant scores; no correlations reported");
        }
        entries.sort_by(|a, b| b.r.total_cmp(&a.r).then_with(|| a.token.cmp(&b.token)));
        let positive: Vec<DlaEntry> = entries.iter().take(top_n).cloned().collect();
        let mut negative: Vec<DlaEntry> = entries.iter().rev().take(top_n).cloned().collect();
        negative.sort_by(|a, b| a.r.total_cmp(&b.r).then_with(|| a.token.cmp(&b.token)));
        factors.push(FactorDla {
            factor: name.clone(),
            positive,
            negative,
        });
    }
    Ok(DlaReport {
        n_users: matrix.n_users(),
        top_n,
        controls: control_names,
        skipped_constant: skipped,
        factors,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::csr::CsrMatrix;
    use crate::utm::Vocabulary;
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn matrix(n: usize, p: usize, seed: u64) -> UserTermMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<Vec<(usize, f64)>> = (0..n)
            .map(|_| (0..p).map(|j| (j, rng.random::<f64>() / p as f64)).collect())
            .collect();
        let values = CsrMatrix::from_rows(p, rows).unwrap();
        UserTermMatrix {
            user_ids: (0..n).map(|i| format!("u{i:04}")).collect(),
            vocabulary: Vocabulary::new((0..p).map(|j| format!("t{j:03}")).collect()).unwrap(),
            counts: values.clone(),
            values,
            total_tokens: vec![100; n],
        }
    }

    fn scores_from(m: &UserTermMatrix, cols: Vec<Vec<f64>>) -> FactorScores {
        let k = cols.len();
        FactorScores {
            user_ids: m.user_ids.clone(),
            factor_names: (1..=k).map(|c| format!("F{c}")).collect(),
            scores: DMatrix::from_fn(m.n_users(), k, |i, c| cols[c][i]),
            model_hash: String::new(),
            matrix_hash: String::new(),
        }
    }

    #[test]
    fn matching_token_ranks_first() {
        let m = matrix(100, 20, 1);
        let col: Vec<f64> = (0..100).map(|i| m.values.get(i, 7)).collect();
        let rep = dla(&m, &scores_from(&m, vec![col]), 5, None).unwrap();
        let top = &rep.factors[0].positive[0];
        assert_eq!(top.token, "t007");
        assert!((top.r - 1.0).abs() < 1e-12);
        assert_eq!(rep.factors[0].positive.len(), 5);
        assert_eq!(rep.factors[0].negative.len(), 5);
        assert!(rep.factors[0].negative.windows(2).all(|w| w[0].r <= w[1].r));
    }

    #[test]
    fn permuted_scores_stay_under_null_bound() {
        let (n, p) = (500, 50);
        let m = matrix(n, p, 2);
        let mut col: Vec<f64> = (0..n).map(|i| m.values.get(i, 3)).collect();
        col.shuffle(&mut ChaCha8Rng::seed_from_u64(3));
        let rep = dla(&m, &scores_from(&m, vec![col]), p, None).unwrap();
        let max = rep.factors[0].positive.iter().map(|e| e.r.abs()).fold(0.0, f64::max);
        // Two-sided 0.1% level with a Bonferroni correction over p tokens.
        let bound = 4.27 / (n as f64).sqrt();
        assert!(max < bound, "max |r| {max} vs {bound}");
    }

    #[test]
    fn empty_when_top_n_zero_and_affine_invariant() {
        let m = matrix(60, 10, 4);
        let col: Vec<f64> = (0..60).map(|i| m.values.get(i, 1) + m.values.get(i, 2)).collect();
        let rep = dla(&m, &scores_from(&m, vec![col.clone()]), 0, None).unwrap();
        assert!(rep.factors[0].positive.is_empty() && rep.factors[0].negative.is_empty());
        let a = dla(&m, &scores_from(&m, vec![col.clone()]), 4, None).unwrap();
        let scaled: Vec<f64> = col.iter().map(|v| 3.0 * v + 2.0).collect();
        let b = dla(&m, &scores_from(&m, vec![scaled]), 4, None).unwrap();
        let names = |r: &DlaReport| r.factors[0].positive.iter().map(|e| e.token.clone()).collect::<Vec<_>>();
        assert_eq!(names(&a), names(&b));
    }

    #[test]
    fn controls_are_recorded_and_constant_columns_skipped() {
        let mut m = matrix(40, 5, 5);
        let rows: Vec<Vec<(usize, f64)>> = (0..40)
            .map(|i| (0..5).map(|j| (j, if j == 4 { 0.1 } else { m.values.get(i, j) })).collect())
            .collect();
        m.values = CsrMatrix::from_rows(5, rows).unwrap();
        let cov = Covariates::from_raw(m.user_ids.clone(), &(0..40).map(|i| Some(20.0 + i as f64)).collect::<Vec<_>>(), &(0..40).map(|i| Some((i % 2) as f64)).collect::<Vec<_>>());
        let col: Vec<f64> = (0..40).map(|i| m.values.get(i, 0)).collect();
        let rep = dla(&m, &scores_from(&m, vec![col]), 2, Some(&cov)).unwrap();
        assert_eq!(rep.controls, vec!["age", "gender"]);
        assert_eq!(rep.skipped_constant, vec!["t004"]);
        let csv = String::from_utf8(rep.to_csv().unwrap()).unwrap();
        assert!(csv.starts_with("factor,token,r,frequency\n"));
        assert_eq!(csv.lines().count(), 5);
    }
}
