//! Latent factor models over the user-term matrix.
//!
//! [`fit_fa`] (principal-axis factoring) is the primary route; [`fit_svd`] and
//! [`fit_lda`] are baselines. Fitted loadings are rotated with
//! [`rotate_model`], sign-normalized with [`apply_sign_convention`], and
//! users are scored with regression (Thurstone) weights via [`score_users`].

mod fa;
mod lda;
mod rotation;
mod svd;

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

pub use fa::{fit_fa, CommunalityInit, FaOptions, HEYWOOD_CEILING};
pub use lda::{fit_lda, LdaOptions, TopicModel};
pub use rotation::{
    orthomax_criterion, rotate_orthogonal, rotate_promax, OrthomaxCriterion, OrthomaxResult,
    PromaxResult,
};
pub use svd::{fit_svd, truncated_svd, TruncatedSvd};

use crate::error::{Error, Result};
use crate::io::{matrix_hash, read_json, sha256_hex, write_json};
use crate::linalg::{rows, solve_spd};
use crate::utm::{ColumnStats, StandardizedMatrix};

/// Default ridge added to the training correlation matrix for score weights.
pub const DEFAULT_SCORE_RIDGE: f64 = 1e-6;

/// Lower bound on uniquenesses in the model-implied correlation matrix.
pub const IMPLIED_UNIQUENESS_FLOOR: f64 = 1e-3;

/// Correlation matrix behind the regression score weights.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreBasis {
    /// `sample` when there are fewer terms than users, `implied` otherwise.
    #[default]
    Auto,
    /// Training correlation matrix `R` (plus ridge).
    Sample,
    /// Model-implied `L Phi L^T + Psi`, which stays invertible when `R` is
    /// rank deficient.
    Implied,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Fa,
    Svd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RotationKind {
    None,
    Varimax,
    Equamax,
    Promax,
}

/// Requested rotation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RotationSpec {
    pub kind: RotationKind,
    /// Promax power; ignored otherwise.
    #[serde(default = "default_kappa")]
    pub kappa: u32,
    #[serde(default = "default_rotation_iter")]
    pub max_iter: usize,
    #[serde(default = "default_rotation_tol")]
    pub tol: f64,
}

fn default_kappa() -> u32 {
    4
}
fn default_rotation_iter() -> usize {
    500
}
fn default_rotation_tol() -> f64 {
    1e-10
}

impl Default for RotationSpec {
    fn default() -> Self {
        Self::promax(4)
    }
}

impl RotationSpec {
    pub fn promax(kappa: u32) -> Self {
        Self {
            kind: RotationKind::Promax,
            kappa,
            max_iter: default_rotation_iter(),
            tol: default_rotation_tol(),
        }
    }

    pub fn of(kind: RotationKind) -> Self {
        Self {
            kind,
            ..Self::promax(4)
        }
    }
}

/// What rotation was applied: `loadings = unrotated * matrix`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RotationRecord {
    pub kind: RotationKind,
    pub kappa: Option<u32>,
    #[serde(with = "rows")]
    pub matrix: DMatrix<f64>,
    pub criterion_trace: Vec<f64>,
    pub converged: bool,
    /// Promax fell back to its orthogonal pre-rotation.
    pub oblique_fallback: bool,
}

impl RotationRecord {
    pub fn none(k: usize) -> Self {
        Self {
            kind: RotationKind::None,
            kappa: None,
            matrix: DMatrix::identity(k, k),
            criterion_trace: vec![],
            converged: true,
            oblique_fallback: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub converged: bool,
    pub iterations: usize,
    pub communality_init: Option<CommunalityInit>,
    /// Terms whose communality exceeded 1 and was clipped.
    pub heywood_terms: Vec<String>,
    pub clamped_negative_eigenvalues: usize,
    pub eigen_solver_converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorModel {
    pub method: Method,
    pub k: usize,
    pub vocabulary: Vec<String>,
    /// terms x k; the pattern matrix for oblique rotations.
    #[serde(with = "rows")]
    pub loadings: DMatrix<f64>,
    pub rotation: RotationRecord,
    /// Factor correlations (identity unless oblique).
    #[serde(with = "rows")]
    pub phi: DMatrix<f64>,
    pub communalities: Vec<f64>,
    /// Unrotated variance explained per factor.
    pub eigenvalues: Vec<f64>,
    pub column_stats: ColumnStats,
    pub sign_convention_applied: bool,
    /// terms x k regression weights, `(R + ridge I)^-1 S`.
    #[serde(with = "rows::option")]
    pub score_weights: Option<DMatrix<f64>>,
    pub score_ridge: f64,
    #[serde(default)]
    pub score_basis: ScoreBasis,
    pub diagnostics: FitDiagnostics,
    /// sha256 of the model serialized with this field empty.
    pub content_hash: String,
}

impl FactorModel {
    pub fn is_oblique(&self) -> bool {
        self.rotation.kind == RotationKind::Promax && !self.rotation.oblique_fallback
    }

    /// Structure matrix `L Phi` (equal to `L` for orthogonal solutions).
    pub fn structure(&self) -> DMatrix<f64> {
        &self.loadings * &self.phi
    }

    /// Sum of squared loadings per factor.
    pub fn explained_ss(&self) -> Vec<f64> {
        self.loadings
            .column_iter()
            .map(|c| c.iter().map(|v| v * v).sum())
            .collect()
    }

    pub fn factor_names(&self) -> Vec<String> {
        (1..=self.k).map(|i| format!("F{i}")).collect()
    }

    pub fn compute_hash(&self) -> String {
        let mut copy = self.clone();
        copy.content_hash.clear();
        let bytes = serde_json::to_vec(&copy).expect("model serializes");
        sha256_hex(&bytes)
    }

    pub fn finalize(mut self) -> Self {
        self.content_hash = self.compute_hash();
        self
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let m: Self = read_json(path)?;
        if !m.content_hash.is_empty() && m.content_hash != m.compute_hash() {
            return Err(Error::InvalidInput(format!(
                "{}: content hash does not match model contents",
                path.display()
            )));
        }
        Ok(m)
    }

    fn permute_columns(&mut self, order: &[usize]) {
        let k = self.k;
        self.loadings = DMatrix::from_fn(self.loadings.nrows(), k, |i, c| self.loadings[(i, order[c])]);
        self.rotation.matrix = DMatrix::from_fn(k, k, |i, c| self.rotation.matrix[(i, order[c])]);
        self.phi = DMatrix::from_fn(k, k, |a, b| self.phi[(order[a], order[b])]);
        if let Some(w) = &self.score_weights {
            self.score_weights = Some(DMatrix::from_fn(w.nrows(), k, |i, c| w[(i, order[c])]));
        }
    }
}

/// Rotate a fitted model's loadings and reorder factors by descending
/// explained sum of squares. Invalidates any score weights.
pub fn rotate_model(mut model: FactorModel, spec: &RotationSpec) -> FactorModel {
    let k = model.k;
    model.score_weights = None;
    match spec.kind {
        RotationKind::None => {
            model.rotation = RotationRecord::none(k);
        }
        RotationKind::Varimax | RotationKind::Equamax => {
            let crit = if spec.kind == RotationKind::Varimax {
                OrthomaxCriterion::Varimax
            } else {
                OrthomaxCriterion::Equamax
            };
            let r = rotate_orthogonal(&model.loadings, crit, spec.max_iter, spec.tol);
            model.loadings = r.loadings;
            model.phi = DMatrix::identity(k, k);
            model.rotation = RotationRecord {
                kind: spec.kind,
                kappa: None,
                matrix: r.rotation,
                criterion_trace: r.criterion_trace,
                converged: r.converged,
                oblique_fallback: false,
            };
        }
        RotationKind::Promax => {
            let r = rotate_promax(&model.loadings, spec.kappa, spec.max_iter, spec.tol);
            model.loadings = r.pattern;
            model.phi = r.phi;
            model.rotation = RotationRecord {
                kind: RotationKind::Promax,
                kappa: Some(spec.kappa),
                matrix: r.rotation,
                criterion_trace: r.orthogonal.criterion_trace,
                converged: r.orthogonal.converged,
                oblique_fallback: r.fallback,
            };
        }
    }
    // Communalities are invariant under orthogonal rotation; for oblique
    // solutions they are the diagonal of L Phi L^T.
    let implied = &model.loadings * &model.phi;
    model.communalities = (0..model.loadings.nrows())
        .map(|i| model.loadings.row(i).dot(&implied.row(i)).clamp(0.0, 1.0))
        .collect();
    let ss = model.explained_ss();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| ss[b].partial_cmp(&ss[a]).unwrap().then(a.cmp(&b)));
    model.permute_columns(&order);
    model
}

/// Flip each factor so its largest-magnitude loading is positive. Among tied
/// magnitudes the lexicographically smallest term decides.
pub fn apply_sign_convention(mut model: FactorModel) -> FactorModel {
    let k = model.k;
    let mut signs = vec![1.0; k];
    for (c, sign) in signs.iter_mut().enumerate() {
        let col = model.loadings.column(c);
        let max = col.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if max == 0.0 {
            continue;
        }
        let pivot = (0..col.len())
            .filter(|&i| col[i].abs() == max)
            .min_by(|&a, &b| model.vocabulary[a].cmp(&model.vocabulary[b]))
            .unwrap();
        if col[pivot] < 0.0 {
            *sign = -1.0;
        }
    }
    for (c, &s) in signs.iter().enumerate() {
        if s < 0.0 {
            model.loadings.column_mut(c).neg_mut();
            model.rotation.matrix.column_mut(c).neg_mut();
            if let Some(w) = model.score_weights.as_mut() {
                w.column_mut(c).neg_mut();
            }
        }
    }
    for a in 0..k {
        for b in 0..k {
            model.phi[(a, b)] *= signs[a] * signs[b];
        }
    }
    model.sign_convention_applied = true;
    model
}

/// Compute regression score weights `W = (R + ridge I)^-1 S` from the
/// training matrix the model was fitted on.
///
/// With more terms than users the inverse is applied through the
/// users x users Woodbury identity.
pub fn with_score_weights(
    mut model: FactorModel,
    training: &StandardizedMatrix,
    ridge: f64,
) -> Result<FactorModel> {
    check_compatible(&model, training)?;
    if ridge.is_nan() || ridge <= 0.0 {
        return Err(Error::InvalidInput("score ridge must be positive".into()));
    }
    let z = &training.z;
    let (n, p) = z.shape();
    let s = model.structure();
    let w = if p <= n {
        let r = z.tr_mul(z) / n as f64;
        solve_spd(&r, &s, ridge)
            .ok_or_else(|| Error::InvalidInput("correlation matrix not positive definite".into()))?
    } else {
        // (Z^T Z / n + e I)^-1 = (1/e) [I - Z^T (n e I + Z Z^T)^-1 Z]
        let g = z * z.transpose();
        let zs = z * &s;
        let inner = solve_spd(&g, &zs, n as f64 * ridge)
            .ok_or_else(|| Error::InvalidInput("gram matrix not positive definite".into()))?;
        (s - z.tr_mul(&inner)) / ridge
    };
    model.score_weights = Some(w);
    model.score_ridge = ridge;
    model.score_basis = ScoreBasis::Sample;
    Ok(model)
}

/// Regression score weights from the model-implied correlation matrix,
/// `W = (L Phi L^T + Psi)^-1 L Phi = Psi^-1 L Phi (I + L^T Psi^-1 L Phi)^-1`,
/// with `Psi = diag(1 - h^2)` floored at [`IMPLIED_UNIQUENESS_FLOOR`].
pub fn with_implied_score_weights(mut model: FactorModel) -> Result<FactorModel> {
    let k = model.k;
    let l = &model.loadings;
    let psi_inv: Vec<f64> = model
        .communalities
        .iter()
        .map(|h| 1.0 / (1.0 - h).max(IMPLIED_UNIQUENESS_FLOOR))
        .collect();
    let scaled = DMatrix::from_fn(l.nrows(), k, |i, j| l[(i, j)] * psi_inv[i]);
    let b = &scaled * &model.phi;
    let a = DMatrix::identity(k, k) + l.tr_mul(&b);
    let a_inv = a
        .try_inverse()
        .ok_or_else(|| Error::InvalidInput("implied score system is singular".into()))?;
    model.score_weights = Some(b * a_inv);
    model.score_ridge = 0.0;
    model.score_basis = ScoreBasis::Implied;
    Ok(model)
}

fn check_compatible(model: &FactorModel, zm: &StandardizedMatrix) -> Result<()> {
    if zm.stats.vocabulary_hash != model.column_stats.vocabulary_hash
        || zm.z.ncols() != model.vocabulary.len()
    {
        return Err(Error::VocabularyMismatch(
            "matrix vocabulary differs from the model vocabulary".into(),
        ));
    }
    Ok(())
}

/// Users x k factor scores.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorScores {
    pub user_ids: Vec<String>,
    pub factor_names: Vec<String>,
    pub scores: DMatrix<f64>,
    pub model_hash: String,
    pub matrix_hash: String,
}

impl FactorScores {
    pub fn k(&self) -> usize {
        self.scores.ncols()
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        crate::linalg::column(&self.scores, j)
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        crate::io::table_to_csv("user_id", &self.user_ids, &self.factor_names, &self.scores)
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        crate::io::write_atomic(path, &self.to_csv()?)
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        let t = crate::io::read_table(path)?;
        if t.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("scores in {}", path.display())));
        }
        Ok(Self {
            user_ids: t.row_ids,
            factor_names: t.columns,
            matrix_hash: matrix_hash(&t.values),
            scores: t.values,
            model_hash: String::new(),
        })
    }

    /// Scores restricted to `ids`, in that order.
    pub fn select(&self, ids: &[String]) -> Result<Self> {
        let pos: std::collections::HashMap<&str, usize> = self
            .user_ids
            .iter()
            .enumerate()
            .map(|(i, u)| (u.as_str(), i))
            .collect();
        let idx: Vec<usize> = ids
            .iter()
            .map(|id| {
                pos.get(id.as_str())
                    .copied()
                    .ok_or_else(|| Error::UserMismatch(format!("no scores for user {id}")))
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            user_ids: ids.to_vec(),
            factor_names: self.factor_names.clone(),
            scores: DMatrix::from_fn(idx.len(), self.k(), |i, j| self.scores[(idx[i], j)]),
            model_hash: self.model_hash.clone(),
            matrix_hash: self.matrix_hash.clone(),
        })
    }
}

/// Regression factor scores `Z W` for a matrix standardized with the
/// model's training statistics.
pub fn score_users(model: &FactorModel, zm: &StandardizedMatrix) -> Result<FactorScores> {
    check_compatible(model, zm)?;
    if zm.stats != model.column_stats {
        return Err(Error::VocabularyMismatch(
            "matrix was not standardized with the model's training statistics".into(),
        ));
    }
    let w = model.score_weights.as_ref().ok_or_else(|| {
        Error::InvalidInput("model has no score weights; call with_score_weights".into())
    })?;
    let scores = &zm.z * w;
    if scores.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("factor scores".into()));
    }
    Ok(FactorScores {
        user_ids: zm.user_ids.clone(),
        factor_names: model.factor_names(),
        matrix_hash: matrix_hash(&zm.z),
        scores,
        model_hash: model.content_hash.clone(),
    })
}
