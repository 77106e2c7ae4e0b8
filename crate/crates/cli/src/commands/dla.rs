use std::path::PathBuf;

use lingtraits_core::evalsuite::dla;
use lingtraits_core::utm::{build_matrix, Covariates, Vocabulary};

use crate::config::PipelineConfig;
use crate::manifest::Manifest;
use crate::{CliError, Tag};

use super::{load_corpus, load_model, out_dir, topic_scores, LoadedModel};

pub(super) fn run(cfg: &PipelineConfig, model: Option<PathBuf>) -> Result<(), CliError> {
    let dir = out_dir(cfg)?.to_path_buf();
    let mut manifest = Manifest::new("dla", cfg);
    let model = load_model(cfg, model, &mut manifest)?;
    let corpus = load_corpus(cfg, &mut manifest)?;
    let (matrix, scores) = match &model {
        LoadedModel::Factor(p) => {
            let (matrix, _) = p.matrix_for(&corpus).tag("utm")?;
            let scores = p.score_matrix(&matrix, &corpus).tag("factors")?;
            (matrix, scores)
        }
        LoadedModel::Topic(t) => {
            let vocab = Vocabulary::new(t.vocabulary.clone()).tag("utm")?;
            let (full, _) = build_matrix(&corpus, &vocab).tag("utm")?;
            let scores = topic_scores(t, &full.user_ids)?;
            let rows: Vec<usize> = scores
                .user_ids
                .iter()
                .map(|u| full.user_ids.iter().position(|x| x == u).unwrap())
                .collect();
            (full.select_rows(&rows), scores)
        }
    };
    let controls = if cfg.dla.controls {
        Some(Covariates::from_corpus(&corpus, &matrix.user_ids).tag("utm")?)
    } else {
        None
    };
    let report = dla(&matrix, &scores, cfg.dla.top_n, controls.as_ref()).tag("evalsuite")?;
    manifest.write_json(&dir.join("dla.json"), &report).tag("cli")?;
    manifest.write_csv(&dir.join("dla.csv"), &report.to_csv().tag("evalsuite")?).tag("cli")?;

    if !report.controls.is_empty() {
        println!("controls: {}", report.controls.join(", "));
    }
    for f in &report.factors {
        let pos: Vec<&str> = f.positive.iter().take(8).map(|e| e.token.as_str()).collect();
        let neg: Vec<&str> = f.negative.iter().take(8).map(|e| e.token.as_str()).collect();
        println!("{}  + {}", f.factor, pos.join(" "));
        println!("{}  - {}", " ".repeat(f.factor.len()), neg.join(" "));
    }
    Ok(())
}
