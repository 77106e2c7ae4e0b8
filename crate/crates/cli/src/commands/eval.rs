use std::collections::HashMap;
use std::path::PathBuf;

use lingtraits_core::io::{read_table, Table};
use lingtraits_core::predict::{eval_outcome, reports_to_csv};
use lingtraits_core::utm::Covariates;
use lingtraits_core::{EvalReport, Task};
use nalgebra::DMatrix;
use serde::Serialize;

use crate::config::PipelineConfig;
use crate::manifest::Manifest;
use crate::{fail, CliError, Tag};

use super::{cluster, file_stem, load_corpus, load_model, out_dir};

/// Feature sets evaluated for every outcome, in table order.
pub const FEATURE_SETS: [&str; 3] = ["demog", "scores", "scores+demog"];

/// One row of the summary table: mean (and std) of the split metric for each
/// feature set.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TableRow {
    pub outcome: String,
    pub task: Task,
    pub metric: String,
    pub n_rows: usize,
    pub means: [f64; 3],
    pub stds: [f64; 3],
}

fn infer_task(y: &[f64]) -> Task {
    if y.iter().filter(|v| v.is_finite()).all(|&v| v == 0.0 || v == 1.0) {
        Task::Classification
    } else {
        Task::Regression
    }
}

fn hstack(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols() + b.ncols(), |i, j| {
        if j < a.ncols() {
            a[(i, j)]
        } else {
            b[(i, j - a.ncols())]
        }
    })
}

fn column_for(table: &Table, col: usize, users: &[String]) -> Vec<f64> {
    let pos: HashMap<&str, usize> = table.row_ids.iter().enumerate().map(|(i, u)| (u.as_str(), i)).collect();
    users
        .iter()
        .map(|u| pos.get(u.as_str()).map_or(f64::NAN, |&i| table.values[(i, col)]))
        .collect()
}

fn table_csv(rows: &[TableRow]) -> anyhow::Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["outcome".to_string(), "task".into(), "metric".into(), "n_rows".into()];
    for f in FEATURE_SETS {
        header.push(f.to_string());
        header.push(format!("{f}_std"));
    }
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![r.outcome.clone(), task_name(r.task).into(), r.metric.clone(), r.n_rows.to_string()];
        for i in 0..3 {
            rec.push(r.means[i].to_string());
            rec.push(r.stds[i].to_string());
        }
        w.write_record(&rec)?;
    }
    Ok(w.into_inner()?)
}

fn task_name(t: Task) -> &'static str {
    match t {
        Task::Regression => "regression",
        Task::Classification => "classification",
    }
}

#[derive(Serialize)]
struct OutcomeReports<'a> {
    outcome: &'a str,
    reports: &'a [EvalReport],
}

pub(super) fn run(cfg: &PipelineConfig, model: Option<PathBuf>) -> Result<(), CliError> {
    let dir = out_dir(cfg)?.to_path_buf();
    let mut manifest = Manifest::new("eval", cfg);
    manifest.seed("split_seed_base", cfg.seed);
    let model = load_model(cfg, model, &mut manifest)?;
    let corpus = load_corpus(cfg, &mut manifest)?;

    let Some(outcomes_path) = &cfg.paths.outcomes else {
        return fail("predict", "config has no paths.outcomes");
    };
    let table = read_table(outcomes_path).tag("predict")?;
    manifest.input(outcomes_path).tag("predict")?;
    if table.row_ids.is_empty() {
        return fail("predict", format!("outcome file {} has no rows", outcomes_path.display()));
    }
    let specs: Vec<(String, Option<Task>)> = if cfg.eval.outcomes.is_empty() {
        table.columns.iter().map(|c| (c.clone(), None)).collect()
    } else {
        cfg.eval.outcomes.iter().map(|o| (o.column.clone(), o.task)).collect()
    };
    let missing: Vec<&str> = specs
        .iter()
        .filter(|(c, _)| !table.columns.contains(c))
        .map(|(c, _)| c.as_str())
        .collect();
    if !missing.is_empty() {
        return fail(
            "predict",
            format!("outcome column(s) missing from {}: {}", outcomes_path.display(), missing.join(", ")),
        );
    }

    let scores = model.scores(&corpus)?;
    let users = &scores.user_ids;
    let demog = Covariates::from_corpus(&corpus, users).tag("utm")?.feature_matrix();
    let features = [demog.clone(), scores.scores.clone(), hstack(&scores.scores, &demog)];

    let mut targets: Vec<(String, Vec<f64>, Task, bool)> = specs
        .iter()
        .map(|(name, task)| {
            let col = table.columns.iter().position(|c| c == name).unwrap();
            let y = column_for(&table, col, users);
            let task = task.unwrap_or_else(|| infer_task(&y));
            (name.clone(), y, task, false)
        })
        .collect();
    if cfg.eval.like_clusters {
        if let Some(likes) = &cfg.paths.likes {
            manifest.input(likes).tag("nmfcluster")?;
            manifest.seed("nmf", cfg.seed);
            let report = cluster::cluster_report(cfg, likes)?;
            for (c, y) in report.targets(users).into_iter().enumerate() {
                targets.push((format!("likes_c{c}"), y, Task::Classification, true));
            }
        }
    }

    let eval_dir = dir.join("eval");
    std::fs::create_dir_all(&eval_dir).tag("cli")?;
    let mut all_reports = Vec::new();
    let mut rows = Vec::new();
    let mut like_rows = Vec::new();
    for (name, y, task, is_like) in &targets {
        let ecfg = cfg.eval.eval_config(*task, cfg.seed);
        let mut reports = Vec::new();
        for (fname, x) in FEATURE_SETS.iter().zip(&features) {
            match eval_outcome(name, fname, x, y, *task, &ecfg) {
                Ok(r) => reports.push(r),
                // Small like clusters may not support a stratified split.
                Err(e) if *is_like => {
                    log::warn!("skipping {name}: {e}");
                    break;
                }
                Err(e) => return Err(e).tag("predict"),
            }
        }
        if reports.len() < FEATURE_SETS.len() {
            continue;
        }
        let row = TableRow {
            outcome: name.clone(),
            task: *task,
            metric: reports[0].metric.clone(),
            n_rows: reports[0].n_rows,
            means: [reports[0].mean, reports[1].mean, reports[2].mean],
            stds: [reports[0].std, reports[1].std, reports[2].std],
        };
        manifest
            .write_json(&eval_dir.join(format!("{}.json", file_stem(name))), &OutcomeReports { outcome: name, reports: &reports })
            .tag("cli")?;
        if *is_like {
            like_rows.push(row.clone());
        }
        rows.push(row);
        all_reports.extend(reports);
    }
    if !like_rows.is_empty() {
        let n = like_rows.len() as f64;
        let mean_of = |f: &dyn Fn(&TableRow) -> f64| like_rows.iter().map(f).sum::<f64>() / n;
        rows.push(TableRow {
            outcome: "likes_mean".into(),
            task: Task::Classification,
            metric: like_rows[0].metric.clone(),
            n_rows: like_rows.iter().map(|r| r.n_rows).max().unwrap_or(0),
            means: [0, 1, 2].map(|i| mean_of(&|r: &TableRow| r.means[i])),
            stds: [0, 1, 2].map(|i| mean_of(&|r: &TableRow| r.stds[i])),
        });
    }
    manifest.write_csv(&dir.join("eval_splits.csv"), &reports_to_csv(&all_reports).tag("predict")?).tag("cli")?;
    manifest.write_csv(&dir.join("eval_table.csv"), &table_csv(&rows).tag("cli")?).tag("cli")?;

    println!("{:<20} {:>6} {:>16} {:>16} {:>16}", "outcome", "metric", FEATURE_SETS[0], FEATURE_SETS[1], FEATURE_SETS[2]);
    for r in &rows {
        println!(
            "{:<20} {:>6} {:>9.3} ({:.3}) {:>9.3} ({:.3}) {:>9.3} ({:.3})",
            r.outcome, r.metric, r.means[0], r.stds[0], r.means[1], r.stds[1], r.means[2], r.stds[2]
        );
    }
    Ok(())
}
