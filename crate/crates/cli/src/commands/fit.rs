use std::path::PathBuf;

use lingtraits_core::factors::fit_lda;
use lingtraits_core::utm::select_vocabulary;
use lingtraits_core::FittedPipeline;
use serde::Serialize;

use crate::config::PipelineConfig;
use crate::manifest::Manifest;
use crate::{CliError, Tag};

use super::{load_corpus, load_model, out_dir, topic_scores, SavedFactorModel};

#[derive(Debug, Serialize)]
struct Quantiles {
    min: f64,
    q25: f64,
    median: f64,
    q75: f64,
    max: f64,
}

fn quantiles(values: &[f64]) -> Quantiles {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let at = |q: f64| {
        let pos = q * (v.len() - 1) as f64;
        let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
        v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
    };
    Quantiles { min: v[0], q25: at(0.25), median: at(0.5), q75: at(0.75), max: v[v.len() - 1] }
}

#[derive(Debug, Serialize)]
struct FitSummary {
    method: String,
    k: usize,
    n_users: usize,
    vocabulary_size: usize,
    model_hash: String,
    /// Per-term communalities (FA / SVD only).
    communalities: Option<Quantiles>,
    /// Sum of squared loadings per factor and as a share of total variance.
    explained_ss: Vec<f64>,
    explained_share: Vec<f64>,
    heywood_terms: usize,
}

pub(super) fn run_fit(cfg: &PipelineConfig) -> Result<(), CliError> {
    let dir = out_dir(cfg)?.to_path_buf();
    let mut manifest = Manifest::new("fit", cfg);
    let corpus = load_corpus(cfg, &mut manifest)?;

    let summary = match cfg.factor_config() {
        Some(fc) => {
            let (pipeline, matrix) = FittedPipeline::fit(&corpus, &fc).tag("factors")?;
            let scores = pipeline.score_matrix(&matrix, &corpus).tag("factors")?;
            let m = &pipeline.model;
            let p = m.vocabulary.len() as f64;
            let ss = m.explained_ss();
            let saved = SavedFactorModel { model: m.clone(), factor_config: fc.clone() };
            manifest.write_json(&dir.join("model.json"), &saved).tag("cli")?;
            manifest.write_csv(&dir.join("scores.csv"), &scores.to_csv().tag("factors")?).tag("cli")?;
            FitSummary {
                method: format!("{:?}", cfg.method).to_lowercase(),
                k: m.k,
                n_users: scores.user_ids.len(),
                vocabulary_size: m.vocabulary.len(),
                model_hash: m.content_hash.clone(),
                communalities: Some(quantiles(&m.communalities)),
                explained_share: ss.iter().map(|s| s / p).collect(),
                explained_ss: ss,
                heywood_terms: m.diagnostics.heywood_terms.len(),
            }
        }
        None => {
            let vocab = select_vocabulary(&corpus, &cfg.vocabulary).tag("utm")?;
            let opts = cfg.lda_options();
            manifest.seed("lda", opts.seed);
            let model = fit_lda(&corpus, &vocab, &opts).tag("factors")?;
            let scores = topic_scores(&model, &model.user_ids)?;
            manifest.write_json(&dir.join("model.json"), &model).tag("cli")?;
            manifest.write_csv(&dir.join("scores.csv"), &scores.to_csv().tag("factors")?).tag("cli")?;
            FitSummary {
                method: "lda".into(),
                k: model.k,
                n_users: model.user_ids.len(),
                vocabulary_size: vocab.len(),
                model_hash: super::LoadedModel::Topic(model.clone()).hash(),
                communalities: None,
                explained_ss: Vec::new(),
                explained_share: Vec::new(),
                heywood_terms: 0,
            }
        }
    };
    manifest.write_json(&dir.join("fit_summary.json"), &summary).tag("cli")?;

    println!("method {}  k = {}", summary.method, summary.k);
    println!("users {}  vocabulary {}", summary.n_users, summary.vocabulary_size);
    if let Some(q) = &summary.communalities {
        println!(
            "communalities  min {:.3}  q25 {:.3}  median {:.3}  q75 {:.3}  max {:.3}",
            q.min, q.q25, q.median, q.q75, q.max
        );
        let total: f64 = summary.explained_share.iter().sum();
        for (i, (ss, share)) in summary.explained_ss.iter().zip(&summary.explained_share).enumerate() {
            println!("F{}  ss {:.3}  share {:.4}", i + 1, ss, share);
        }
        println!("total variance explained {:.4}", total);
        if summary.heywood_terms > 0 {
            println!("warning: {} Heywood term(s) clipped", summary.heywood_terms);
        }
    }
    println!("model hash {}", summary.model_hash);
    Ok(())
}

pub(super) fn run_score(cfg: &PipelineConfig, model: Option<PathBuf>) -> Result<(), CliError> {
    let dir = out_dir(cfg)?.to_path_buf();
    let mut manifest = Manifest::new("score", cfg);
    let model = load_model(cfg, model, &mut manifest)?;
    let corpus = load_corpus(cfg, &mut manifest)?;
    let scores = model.scores(&corpus)?;
    let path = dir.join("scored.csv");
    manifest.write_csv(&path, &scores.to_csv().tag("factors")?).tag("cli")?;
    println!("scored {} of {} users -> {}", scores.user_ids.len(), corpus.len(), path.display());
    Ok(())
}
