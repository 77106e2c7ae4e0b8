//! JSON pipeline configuration. Every key has a default, so `{}` is a valid
//! config; relative paths resolve against the config file's directory.

use std::path::{Path, PathBuf};

use lingtraits_core::evalsuite::{DropoutConfig, RetestConfig};
use lingtraits_core::factors::{FaOptions, LdaOptions, RotationSpec, ScoreBasis, DEFAULT_SCORE_RIDGE};
use lingtraits_core::fixture::FixtureConfig;
use lingtraits_core::io::sha256_hex;
use lingtraits_core::predict::EvalConfig;
use lingtraits_core::utm::VocabularyConfig;
use lingtraits_core::{FactorConfig, FilterConfig, Method, Task};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Paths {
    pub messages: Option<PathBuf>,
    pub demographics: Option<PathBuf>,
    pub outcomes: Option<PathBuf>,
    pub likes: Option<PathBuf>,
    pub stopwords: Option<PathBuf>,
    pub emoticons: Option<PathBuf>,
}

impl Paths {
    fn resolve(&mut self, base: &Path) {
        for p in [
            &mut self.messages,
            &mut self.demographics,
            &mut self.outcomes,
            &mut self.likes,
            &mut self.stopwords,
            &mut self.emoticons,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ModelMethod {
    Fa,
    Svd,
    Lda,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LdaSettings {
    pub alpha_total: f64,
    pub beta: f64,
    pub iters: usize,
}

impl Default for LdaSettings {
    fn default() -> Self {
        let d = LdaOptions::default();
        Self { alpha_total: d.alpha_total, beta: d.beta, iters: d.iters }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeSpec {
    pub column: String,
    /// Inferred from the column (0/1 only means classification) when absent.
    #[serde(default)]
    pub task: Option<Task>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalSettings {
    /// Outcome columns to evaluate; empty means every column.
    pub outcomes: Vec<OutcomeSpec>,
    pub n_splits: usize,
    pub test_fraction: f64,
    pub folds: usize,
    pub ridge_grid: Option<Vec<f64>>,
    pub c_grid: Option<Vec<f64>>,
    /// Add one classification target per like cluster when likes are given.
    pub like_clusters: bool,
}

impl Default for EvalSettings {
    fn default() -> Self {
        let d = EvalConfig::default();
        Self {
            outcomes: Vec::new(),
            n_splits: d.n_splits,
            test_fraction: d.test_fraction,
            folds: d.folds,
            ridge_grid: None,
            c_grid: None,
            like_clusters: true,
        }
    }
}

impl EvalSettings {
    pub fn eval_config(&self, task: Task, seed: u64) -> EvalConfig {
        EvalConfig {
            n_splits: self.n_splits,
            test_fraction: self.test_fraction,
            folds: self.folds,
            grid: match task {
                Task::Regression => self.ridge_grid.clone(),
                Task::Classification => self.c_grid.clone(),
            },
            seed_base: seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StabilitySettings {
    /// Share of users held out from every dropout fit and scored by all of them.
    pub holdout_fraction: f64,
    pub train_fraction: f64,
    pub period_months: u32,
    pub min_period_tokens: u64,
    pub min_common_users: usize,
    pub drop_fraction: f64,
    pub runs: usize,
}

impl Default for StabilitySettings {
    fn default() -> Self {
        let r = RetestConfig::default();
        let d = DropoutConfig::default();
        Self {
            holdout_fraction: 0.2,
            train_fraction: r.train_fraction,
            period_months: r.period_months,
            min_period_tokens: r.min_period_tokens,
            min_common_users: r.min_common_users,
            drop_fraction: d.drop_fraction,
            runs: d.runs,
        }
    }
}

impl StabilitySettings {
    pub fn retest(&self, seed: u64) -> RetestConfig {
        RetestConfig {
            train_fraction: self.train_fraction,
            period_months: self.period_months,
            min_period_tokens: self.min_period_tokens,
            min_common_users: self.min_common_users,
            seed,
        }
    }

    pub fn dropout(&self, seed: u64) -> DropoutConfig {
        DropoutConfig { drop_fraction: self.drop_fraction, runs: self.runs, seed_base: seed }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DlaSettings {
    pub top_n: usize,
    /// Partial out age and gender from both sides.
    pub controls: bool,
}

impl Default for DlaSettings {
    fn default() -> Self {
        Self { top_n: 15, controls: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClusterSettings {
    pub rank: usize,
    pub iters: usize,
    /// Keep only the most frequent likes; 0 keeps all.
    pub top_likes: usize,
    pub top_items: usize,
}

impl Default for ClusterSettings {
    fn default() -> Self {
        Self { rank: 20, iters: 500, top_likes: 0, top_items: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub paths: Paths,
    pub filter: FilterConfig,
    pub vocabulary: VocabularyConfig,
    pub method: ModelMethod,
    pub k: usize,
    pub rotation: RotationSpec,
    pub fa: FaOptions,
    pub lda: LdaSettings,
    pub score_ridge: f64,
    pub score_basis: ScoreBasis,
    pub residualize_terms: bool,
    pub eval: EvalSettings,
    pub stability: StabilitySettings,
    pub dla: DlaSettings,
    pub cluster: ClusterSettings,
    /// Used by `gen-fixture`; its `seed` is replaced by the global seed.
    pub fixture: FixtureConfig,
    pub seed: u64,
    pub threads: Option<usize>,
    pub out_dir: PathBuf,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            paths: Paths::default(),
            filter: FilterConfig::default(),
            vocabulary: VocabularyConfig::default(),
            method: ModelMethod::Fa,
            k: 5,
            rotation: RotationSpec::default(),
            fa: FaOptions::default(),
            lda: LdaSettings::default(),
            score_ridge: DEFAULT_SCORE_RIDGE,
            score_basis: ScoreBasis::Auto,
            residualize_terms: false,
            eval: EvalSettings::default(),
            stability: StabilitySettings::default(),
            dla: DlaSettings::default(),
            cluster: ClusterSettings::default(),
            fixture: FixtureConfig::default(),
            seed: 0,
            threads: None,
            out_dir: PathBuf::from("out"),
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))?;
        let mut cfg: Self =
            serde_json::from_slice(&bytes).map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.paths.resolve(base);
        if cfg.out_dir.is_relative() {
            cfg.out_dir = base.join(&cfg.out_dir);
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        anyhow::ensure!(self.k >= 1, "k must be at least 1");
        anyhow::ensure!(self.threads != Some(0), "threads must be positive");
        Ok(())
    }

    /// Factor settings for FA / SVD; `None` for LDA.
    pub fn factor_config(&self) -> Option<FactorConfig> {
        let method = match self.method {
            ModelMethod::Fa => Method::Fa,
            ModelMethod::Svd => Method::Svd,
            ModelMethod::Lda => return None,
        };
        Some(FactorConfig {
            method,
            k: self.k,
            rotation: self.rotation.clone(),
            fa: self.fa.clone(),
            vocabulary: self.vocabulary.clone(),
            score_ridge: self.score_ridge,
            score_basis: self.score_basis,
            residualize_terms: self.residualize_terms,
        })
    }

    pub fn lda_options(&self) -> LdaOptions {
        LdaOptions {
            k: self.k,
            alpha_total: self.lda.alpha_total,
            beta: self.lda.beta,
            iters: self.lda.iters,
            seed: self.seed,
        }
    }

    /// Hash of the settings that affect results (output location and thread
    /// count excluded).
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.out_dir = PathBuf::new();
        c.threads = None;
        sha256_hex(&serde_json::to_vec(&c).expect("config serializes"))
    }
}
