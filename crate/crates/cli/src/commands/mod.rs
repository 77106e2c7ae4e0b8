mod align;
mod cluster;
mod dla;
mod eval;
mod fit;
mod fixture;
mod stability;

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use lingtraits_core::corpus::{build_corpus, load_demographics, load_messages, DemographicsTable, MessageFormat};
use lingtraits_core::factors::TopicModel;
use lingtraits_core::io::matrix_hash;
use lingtraits_core::{FactorConfig, FactorModel, FactorScores, FittedPipeline, Tokenizer, UserCorpus};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::config::PipelineConfig;
use crate::manifest::Manifest;
use crate::{fail, Command, CliError, Tag};

pub(crate) fn dispatch(command: Command, mut cfg: PipelineConfig) -> Result<(), CliError> {
    match command {
        Command::GenFixture(a) => fixture::run(&mut cfg, a),
        Command::Fit(a) => {
            if let Some(k) = a.k {
                cfg.k = k;
            }
            if let Some(m) = a.method {
                cfg.method = m;
            }
            cfg.validate().tag("config")?;
            fit::run_fit(&cfg)
        }
        Command::Score(a) => {
            if let Some(m) = a.messages {
                cfg.paths.messages = Some(m);
            }
            fit::run_score(&cfg, a.model.model)
        }
        Command::Eval(a) => {
            if let Some(o) = a.outcomes {
                cfg.paths.outcomes = Some(o);
            }
            if let Some(n) = a.n_splits {
                cfg.eval.n_splits = n;
            }
            eval::run(&cfg, a.model.model)
        }
        Command::Stability(a) => {
            if let Some(r) = a.runs {
                cfg.stability.runs = r;
            }
            if let Some(d) = a.drop_fraction {
                cfg.stability.drop_fraction = d;
            }
            cfg.validate().tag("config")?;
            stability::run(&cfg)
        }
        Command::Dla(a) => {
            if let Some(n) = a.top_n {
                cfg.dla.top_n = n;
            }
            if a.controls {
                cfg.dla.controls = true;
            }
            dla::run(&cfg, a.model.model)
        }
        Command::ClusterLikes(a) => {
            if let Some(l) = a.likes {
                cfg.paths.likes = Some(l);
            }
            if let Some(r) = a.rank {
                cfg.cluster.rank = r;
            }
            cluster::run(&cfg)
        }
        Command::Align(a) => align::run(&cfg, &a.a, &a.b),
    }
}

pub(crate) fn out_dir(cfg: &PipelineConfig) -> Result<&Path, CliError> {
    std::fs::create_dir_all(&cfg.out_dir)
        .map_err(|e| anyhow::anyhow!("{}: {e}", cfg.out_dir.display()))
        .tag("cli")?;
    Ok(&cfg.out_dir)
}

/// Messages and demographics from the config, tokenized and filtered.
/// Input files are recorded in `manifest`.
pub(crate) fn load_corpus(cfg: &PipelineConfig, manifest: &mut Manifest) -> Result<UserCorpus, CliError> {
    let Some(path) = &cfg.paths.messages else {
        return fail("corpus", "config has no paths.messages");
    };
    let Some(format) = MessageFormat::from_path(path) else {
        return fail("corpus", format!("{}: unknown message format (use .jsonl or .csv)", path.display()));
    };
    let loaded = load_messages(path, format).tag("corpus")?;
    manifest.input(path).tag("corpus")?;
    if !loaded.malformed.is_empty() {
        log::warn!("{}: {} malformed row(s) skipped", path.display(), loaded.malformed.len());
    }
    let demographics: DemographicsTable = match &cfg.paths.demographics {
        Some(p) => {
            manifest.input(p).tag("corpus")?;
            load_demographics(p).tag("corpus")?
        }
        None => HashMap::new(),
    };
    for p in [&cfg.paths.stopwords, &cfg.paths.emoticons].into_iter().flatten() {
        manifest.input(p).tag("corpus")?;
    }
    let tokenizer = Tokenizer::from_files(cfg.paths.stopwords.as_deref(), cfg.paths.emoticons.as_deref()).tag("corpus")?;
    let (corpus, summary) = build_corpus(&loaded.messages, &demographics, &cfg.filter, &tokenizer);
    log::info!("corpus: kept {} of {} users", summary.kept, summary.total_users);
    if corpus.is_empty() {
        return fail("corpus", format!("no users left after filtering ({} dropped)", summary.dropped()));
    }
    Ok(corpus)
}

/// A saved model as written by `fit`.
#[derive(Debug, Clone)]
pub enum LoadedModel {
    Factor(Box<FittedPipeline>),
    Topic(TopicModel),
}

/// On-disk form of a factor model: the model plus the settings it was fit with.
#[derive(Serialize, Deserialize)]
pub(crate) struct SavedFactorModel {
    #[serde(flatten)]
    pub model: FactorModel,
    pub factor_config: FactorConfig,
}

impl LoadedModel {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let bytes = std::fs::read(path)
            .map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))
            .tag("factors")?;
        let value: Value = serde_json::from_slice(&bytes)
            .map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))
            .tag("factors")?;
        if value.get("topic_word").is_some() {
            let t: TopicModel = serde_json::from_value(value).tag("factors")?;
            return Ok(Self::Topic(t));
        }
        let saved: SavedFactorModel = serde_json::from_value(value)
            .map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))
            .tag("factors")?;
        if saved.model.content_hash != saved.model.compute_hash() {
            return fail("factors", format!("{}: content hash does not match model contents", path.display()));
        }
        Ok(Self::Factor(Box::new(FittedPipeline::from_model(saved.model, saved.factor_config))))
    }

    pub fn hash(&self) -> String {
        match self {
            Self::Factor(p) => p.model.content_hash.clone(),
            Self::Topic(t) => lingtraits_core::io::sha256_hex(&serde_json::to_vec(t).expect("model serializes")),
        }
    }

    /// Scores for every user of `corpus` the model can score.
    pub fn scores(&self, corpus: &UserCorpus) -> Result<FactorScores, CliError> {
        match self {
            Self::Factor(p) => p.score_corpus(corpus).tag("factors"),
            Self::Topic(t) => topic_scores(t, &corpus.user_ids()),
        }
    }
}

/// Topic proportions for the given users. A topic model only carries
/// proportions for the users it was fit on.
pub(crate) fn topic_scores(t: &TopicModel, ids: &[String]) -> Result<FactorScores, CliError> {
    let pos: HashMap<&str, usize> = t.user_ids.iter().enumerate().map(|(i, u)| (u.as_str(), i)).collect();
    let rows: Vec<(String, usize)> = ids
        .iter()
        .filter_map(|u| pos.get(u.as_str()).map(|&i| (u.clone(), i)))
        .collect();
    if rows.is_empty() {
        return fail("factors", "none of these users were in the topic model's training corpus");
    }
    if rows.len() < ids.len() {
        log::warn!("{} user(s) not in the topic model are not scored", ids.len() - rows.len());
    }
    let scores = DMatrix::from_fn(rows.len(), t.k, |i, c| t.doc_topic[(rows[i].1, c)]);
    Ok(FactorScores {
        user_ids: rows.into_iter().map(|(u, _)| u).collect(),
        factor_names: (1..=t.k).map(|c| format!("T{c}")).collect(),
        matrix_hash: matrix_hash(&scores),
        scores,
        model_hash: String::new(),
    })
}

pub(crate) fn model_path(cfg: &PipelineConfig, arg: Option<PathBuf>) -> PathBuf {
    arg.unwrap_or_else(|| cfg.out_dir.join("model.json"))
}

pub(crate) fn load_model(cfg: &PipelineConfig, arg: Option<PathBuf>, manifest: &mut Manifest) -> Result<LoadedModel, CliError> {
    let path = model_path(cfg, arg);
    let model = LoadedModel::load(&path)?;
    manifest.input(&path).tag("factors")?;
    Ok(model)
}

/// Replace anything but ASCII alphanumerics, `-` and `_` for use in file names.
pub(crate) fn file_stem(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}
