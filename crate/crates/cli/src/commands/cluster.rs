use std::path::Path;

use lingtraits_core::io::table_to_csv;
use lingtraits_core::nmfcluster::{fit_nmf, load_likes, ClusterReport, LikesMatrix, NmfOptions};
use nalgebra::DMatrix;
use serde::Serialize;

use crate::config::PipelineConfig;
use crate::manifest::Manifest;
use crate::{fail, CliError, Tag};

use super::out_dir;

fn fit(cfg: &PipelineConfig, likes_path: &Path) -> Result<(LikesMatrix, ClusterReport, Vec<f64>), CliError> {
    let events = load_likes(likes_path).tag("nmfcluster")?;
    let top = if cfg.cluster.top_likes == 0 { usize::MAX } else { cfg.cluster.top_likes };
    let likes = LikesMatrix::from_events(&events, top).tag("nmfcluster")?;
    let opts = NmfOptions { rank: cfg.cluster.rank, iters: cfg.cluster.iters, seed: cfg.seed };
    let model = fit_nmf(&likes.matrix, &opts).tag("nmfcluster")?;
    let report = ClusterReport::build(&likes, &model, cfg.cluster.top_items).tag("nmfcluster")?;
    Ok((likes, report, model.objective_trace))
}

pub(super) fn cluster_report(cfg: &PipelineConfig, likes_path: &Path) -> Result<ClusterReport, CliError> {
    Ok(fit(cfg, likes_path)?.1)
}

#[derive(Serialize)]
struct ClusterOutput<'a> {
    report: &'a ClusterReport,
    objective_trace: &'a [f64],
}

pub(super) fn run(cfg: &PipelineConfig) -> Result<(), CliError> {
    let Some(path) = &cfg.paths.likes else {
        return fail("nmfcluster", "config has no paths.likes");
    };
    let dir = out_dir(cfg)?.to_path_buf();
    let mut manifest = Manifest::new("cluster-likes", cfg);
    manifest.input(path).tag("nmfcluster")?;
    manifest.seed("nmf", cfg.seed);
    let (likes, report, trace) = fit(cfg, path)?;
    manifest
        .write_json(&dir.join("clusters.json"), &ClusterOutput { report: &report, objective_trace: &trace })
        .tag("cli")?;
    let targets = report.targets(&likes.user_ids);
    let m = DMatrix::from_fn(likes.user_ids.len(), report.rank, |i, c| targets[c][i]);
    let names: Vec<String> = (0..report.rank).map(|c| format!("likes_c{c}")).collect();
    let csv = table_to_csv("user_id", &likes.user_ids, &names, &m).tag("nmfcluster")?;
    manifest.write_csv(&dir.join("cluster_targets.csv"), &csv).tag("cli")?;
    let assigned = report.assignments.iter().filter(|a| a.cluster.is_some()).count();
    println!(
        "{} users, {} likes, rank {}: {} users assigned, final objective {:.4}",
        likes.user_ids.len(),
        report.n_likes,
        report.rank,
        assigned,
        report.final_objective
    );
    for c in &report.clusters {
        let items: Vec<&str> = c.top_items.iter().map(|(l, _)| l.as_str()).take(5).collect();
        println!("cluster {:>2}  size {:>5}  {}", c.cluster, c.size, items.join(" "));
    }
    Ok(())
}
