use lingtraits_core::evalsuite::{dropout_reliability, kept_indices, test_retest};
use lingtraits_core::UserCorpus;
use serde::Serialize;

use crate::config::PipelineConfig;
use crate::manifest::Manifest;
use crate::{fail, CliError, Tag};

use super::{load_corpus, out_dir};

#[derive(Serialize)]
struct Skipped {
    skipped: bool,
    reason: String,
}

/// Hold out a seeded random share of users; the rest is the dropout pool.
fn split_users(corpus: &UserCorpus, fraction: f64, seed: u64) -> (UserCorpus, UserCorpus) {
    let mut hold = vec![true; corpus.len()];
    for i in kept_indices(corpus.len(), fraction, seed) {
        hold[i] = false;
    }
    let pick = |want: bool| UserCorpus {
        users: corpus.users.iter().zip(&hold).filter(|(_, &h)| h == want).map(|(u, _)| u.clone()).collect(),
        filter_config: corpus.filter_config.clone(),
    };
    (pick(false), pick(true))
}

pub(super) fn run(cfg: &PipelineConfig) -> Result<(), CliError> {
    let Some(fc) = cfg.factor_config() else {
        return fail("evalsuite", "stability needs method fa or svd");
    };
    let s = &cfg.stability;
    if !(s.holdout_fraction > 0.0 && s.holdout_fraction < 1.0) {
        return fail("evalsuite", format!("holdout_fraction must be in (0,1), got {}", s.holdout_fraction));
    }
    let dir = out_dir(cfg)?.to_path_buf();
    let mut manifest = Manifest::new("stability", cfg);
    manifest.seed("retest_split", cfg.seed);
    manifest.seed("dropout_seed_base", cfg.seed);
    manifest.seed("holdout_split", cfg.seed);
    let corpus = load_corpus(cfg, &mut manifest)?;
    if corpus.len() < 2 {
        return fail("evalsuite", "stability needs at least two users");
    }

    if corpus.has_timestamps() {
        let run = test_retest(&corpus, &fc, &s.retest(cfg.seed)).tag("evalsuite")?;
        let rep = &run.report;
        manifest.write_json(&dir.join("retest.json"), rep).tag("cli")?;
        println!("test-retest: {} period(s) of {} months", rep.periods.len(), s.period_months);
        for pc in &rep.adjacent {
            match &pc.r {
                Some(r) => {
                    let vals: Vec<String> = r.iter().map(|v| v.map_or("n/a".into(), |x| format!("{x:.3}"))).collect();
                    println!("  {} -> {}  n = {:<5} r = [{}]", pc.from, pc.to, pc.n_common, vals.join(", "));
                }
                None => println!("  {} -> {}  n = {:<5} too few common users", pc.from, pc.to, pc.n_common),
            }
        }
    } else {
        let reason = "corpus has no message timestamps".to_string();
        println!("test-retest skipped: {reason}");
        manifest.write_json(&dir.join("retest.json"), &Skipped { skipped: true, reason }).tag("cli")?;
    }

    let (train, holdout) = split_users(&corpus, s.holdout_fraction, cfg.seed);
    let rep = dropout_reliability(&train, &holdout, &fc, &s.dropout(cfg.seed)).tag("evalsuite")?;
    manifest.write_json(&dir.join("dropout.json"), &rep).tag("cli")?;
    match rep.grand_mean {
        Some(m) => println!(
            "dropout reliability: {} runs, drop {:.0}%, {} held-out users, grand mean |r| {:.4}",
            rep.runs,
            100.0 * rep.drop_fraction,
            rep.n_holdout_users,
            m
        ),
        None => println!("dropout reliability: fewer than two runs, no mean"),
    }
    Ok(())
}
