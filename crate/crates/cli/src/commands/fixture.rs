use std::path::PathBuf;

use lingtraits_core::fixture::generate;
use lingtraits_core::FilterConfig;

use crate::config::{Paths, PipelineConfig};
use crate::manifest::Manifest;
use crate::{CliError, FixtureArgs, Tag};

use super::out_dir;

/// Fixture files go to the output directory next to `pipeline.json`, a
/// config that points at them. Their formats are the input formats, so the
/// manifest is written beside them as `manifest.json`.
pub(super) fn run(cfg: &mut PipelineConfig, a: FixtureArgs) -> Result<(), CliError> {
    let f = &mut cfg.fixture;
    if let Some(v) = a.users {
        f.users = v;
    }
    if let Some(v) = a.terms {
        f.terms = v;
    }
    if let Some(v) = a.k {
        f.k = v;
    }
    if let Some(v) = a.noise {
        f.noise = v;
    }
    if let Some(v) = a.loading {
        f.loading = v;
    }
    if let Some(v) = a.factor_corr {
        f.factor_corr = v;
    }
    if let Some(v) = a.periods {
        f.periods = v;
    }
    if let Some(v) = a.transient {
        f.transient = v;
    }
    if let Some(v) = a.tokens {
        f.tokens = v;
    }
    f.seed = cfg.seed;
    let dir = out_dir(cfg)?.to_path_buf();
    let fx = generate(&cfg.fixture).tag("fixture")?;
    fx.write(&dir).tag("fixture")?;

    let mut manifest = Manifest::new("gen-fixture", cfg);
    manifest.seed("fixture", cfg.fixture.seed);
    manifest.write_json(&dir.join("manifest.json"), &cfg.fixture).tag("cli")?;

    let pipeline = PipelineConfig {
        paths: Paths {
            messages: Some(PathBuf::from("messages.jsonl")),
            demographics: Some(PathBuf::from("demographics.csv")),
            outcomes: Some(PathBuf::from("outcomes.csv")),
            likes: Some(PathBuf::from("likes.csv")),
            ..Default::default()
        },
        filter: FilterConfig::permissive(),
        k: cfg.fixture.k,
        seed: cfg.seed,
        fixture: cfg.fixture.clone(),
        out_dir: PathBuf::from("."),
        ..Default::default()
    };
    let mut bytes = serde_json::to_vec_pretty(&pipeline).tag("cli")?;
    bytes.push(b'\n');
    lingtraits_core::io::write_atomic(&dir.join("pipeline.json"), &bytes).tag("cli")?;
    println!(
        "fixture: {} users, {} terms, k = {}, {} messages -> {}",
        cfg.fixture.users,
        cfg.fixture.terms,
        cfg.fixture.k,
        fx.messages.len(),
        dir.display()
    );
    Ok(())
}
