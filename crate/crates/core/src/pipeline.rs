//! Corpus to scored factors: vocabulary, matrix, standardization, fit,
//! rotation, sign convention and score weights in one place.

use serde::{Deserialize, Serialize};

use crate::corpus::UserCorpus;
use crate::error::{Error, Result};
use crate::factors::{
    apply_sign_convention, fit_fa, fit_svd, rotate_model, score_users, with_implied_score_weights,
    with_score_weights, FaOptions, FactorModel, FactorScores, Method, RotationSpec, ScoreBasis,
    DEFAULT_SCORE_RIDGE,
};
use crate::utm::{
    build_matrix, residualize, select_vocabulary, standardize, Covariates, MatrixReport,
    StandardizedMatrix, UserTermMatrix, VocabularyConfig,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FactorConfig {
    pub method: Method,
    pub k: usize,
    pub rotation: RotationSpec,
    pub fa: FaOptions,
    pub vocabulary: VocabularyConfig,
    /// Ridge added to the training correlation matrix for score weights.
    pub score_ridge: f64,
    pub score_basis: ScoreBasis,
    /// Residualize term frequencies on age and gender before fitting.
    pub residualize_terms: bool,
}

impl Default for FactorConfig {
    fn default() -> Self {
        Self {
            method: Method::Fa,
            k: 5,
            rotation: RotationSpec::default(),
            fa: FaOptions::default(),
            vocabulary: VocabularyConfig::default(),
            score_ridge: DEFAULT_SCORE_RIDGE,
            score_basis: ScoreBasis::Auto,
            residualize_terms: false,
        }
    }
}

/// A fitted model plus what is needed to score new users.
#[derive(Debug, Clone)]
pub struct FittedPipeline {
    pub config: FactorConfig,
    pub model: FactorModel,
    pub matrix_report: MatrixReport,
}

/// Standardized matrix for `matrix`, optionally residualized on the
/// corpus demographics first.
fn prepare(
    matrix: &UserTermMatrix,
    corpus: &UserCorpus,
    residualize_terms: bool,
    training: Option<&FactorModel>,
) -> Result<StandardizedMatrix> {
    if !residualize_terms {
        return standardize(matrix, training.map(|m| &m.column_stats));
    }
    let cov = Covariates::from_corpus(corpus, &matrix.user_ids)?;
    let dense = residualize(&matrix.values.to_dense(), &cov)?.values;
    match training {
        None => StandardizedMatrix::from_dense(matrix.user_ids.clone(), matrix.vocabulary.clone(), &dense),
        Some(m) => {
            if m.column_stats.vocabulary_hash != matrix.vocabulary.hash() {
                return Err(Error::VocabularyMismatch("matrix vocabulary differs from the model".into()));
            }
            Ok(StandardizedMatrix {
                user_ids: matrix.user_ids.clone(),
                vocabulary: matrix.vocabulary.clone(),
                z: crate::utm::apply_stats(&dense, &m.column_stats),
                stats: m.column_stats.clone(),
            })
        }
    }
}

/// Fit, rotate, sign-normalize and attach score weights on a standardized matrix.
pub fn fit_standardized(zm: &StandardizedMatrix, cfg: &FactorConfig) -> Result<FactorModel> {
    let raw = match cfg.method {
        Method::Fa => fit_fa(zm, cfg.k, &cfg.fa)?,
        Method::Svd => fit_svd(zm, cfg.k)?,
    };
    let rotated = if cfg.k >= 2 {
        rotate_model(raw, &cfg.rotation)
    } else {
        raw
    };
    let signed = apply_sign_convention(rotated);
    let (n, p) = zm.z.shape();
    let weighted = match cfg.score_basis {
        ScoreBasis::Sample => with_score_weights(signed, zm, cfg.score_ridge)?,
        ScoreBasis::Implied => with_implied_score_weights(signed)?,
        ScoreBasis::Auto if p < n => with_score_weights(signed, zm, cfg.score_ridge)?,
        ScoreBasis::Auto => with_implied_score_weights(signed)?,
    };
    Ok(weighted.finalize())
}

impl FittedPipeline {
    /// Run vocabulary selection through score weights on `corpus`.
    /// Returns the pipeline and the training user-term matrix.
    pub fn fit(corpus: &UserCorpus, cfg: &FactorConfig) -> Result<(Self, UserTermMatrix)> {
        let vocab = select_vocabulary(corpus, &cfg.vocabulary)?;
        let (matrix, report) = build_matrix(corpus, &vocab)?;
        let zm = prepare(&matrix, corpus, cfg.residualize_terms, None)?;
        let model = fit_standardized(&zm, cfg)?;
        Ok((
            Self {
                config: cfg.clone(),
                model,
                matrix_report: report,
            },
            matrix,
        ))
    }

    pub fn from_model(model: FactorModel, config: FactorConfig) -> Self {
        Self {
            config,
            model,
            matrix_report: MatrixReport::default(),
        }
    }

    /// Users x terms matrix over the model vocabulary.
    pub fn matrix_for(&self, corpus: &UserCorpus) -> Result<(UserTermMatrix, MatrixReport)> {
        let vocab = crate::utm::Vocabulary::new(self.model.vocabulary.clone())?;
        build_matrix(corpus, &vocab)
    }

    /// Score a user-term matrix built over the model vocabulary.
    pub fn score_matrix(&self, matrix: &UserTermMatrix, corpus: &UserCorpus) -> Result<FactorScores> {
        let zm = prepare(matrix, corpus, self.config.residualize_terms, Some(&self.model))?;
        score_users(&self.model, &zm)
    }

    /// Score every user of `corpus` that has in-vocabulary tokens.
    pub fn score_corpus(&self, corpus: &UserCorpus) -> Result<FactorScores> {
        let (matrix, report) = self.matrix_for(corpus)?;
        if !report.dropped_users.is_empty() {
            log::info!("{} user(s) have no in-vocabulary tokens and are not scored", report.dropped_users.len());
        }
        if matrix.n_users() == 0 {
            return Err(Error::Empty("no users with in-vocabulary tokens to score".into()));
        }
        self.score_matrix(&matrix, corpus)
    }
}
