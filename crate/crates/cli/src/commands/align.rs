use std::collections::HashMap;
use std::path::Path;

use lingtraits_core::evalsuite::convergent_matrix;
use lingtraits_core::io::{read_table, table_to_csv, Table};
use nalgebra::DMatrix;

use crate::config::PipelineConfig;
use crate::manifest::Manifest;
use crate::{fail, CliError, Tag};

use super::out_dir;

/// Users present in both tables with every value finite, in `a`'s order.
fn common_rows(a: &Table, b: &Table) -> Vec<(usize, usize)> {
    let pos: HashMap<&str, usize> = b.row_ids.iter().enumerate().map(|(i, u)| (u.as_str(), i)).collect();
    let finite = |t: &Table, i: usize| (0..t.values.ncols()).all(|j| t.values[(i, j)].is_finite());
    a.row_ids
        .iter()
        .enumerate()
        .filter_map(|(i, u)| pos.get(u.as_str()).map(|&j| (i, j)))
        .filter(|&(i, j)| finite(a, i) && finite(b, j))
        .collect()
}

pub(super) fn run(cfg: &PipelineConfig, a_path: &Path, b_path: &Path) -> Result<(), CliError> {
    let dir = out_dir(cfg)?.to_path_buf();
    let mut manifest = Manifest::new("align", cfg);
    let a = read_table(a_path).tag("align")?;
    let b = read_table(b_path).tag("align")?;
    manifest.input(a_path).tag("align")?;
    manifest.input(b_path).tag("align")?;
    let rows = common_rows(&a, &b);
    if rows.len() < 3 {
        return fail("align", format!("only {} user(s) with complete rows in both tables", rows.len()));
    }
    let am = DMatrix::from_fn(rows.len(), a.columns.len(), |i, j| a.values[(rows[i].0, j)]);
    let bm = DMatrix::from_fn(rows.len(), b.columns.len(), |i, j| b.values[(rows[i].1, j)]);
    let cm = convergent_matrix(&am, &a.columns, &bm, &b.columns).tag("align")?;
    manifest.write_json(&dir.join("align.json"), &cm).tag("cli")?;
    let csv = table_to_csv("factor", &cm.row_names, &cm.col_names, &cm.r).tag("align")?;
    manifest.write_csv(&dir.join("align.csv"), &csv).tag("cli")?;

    println!("{} common users; mean matched |r| {:.3}", cm.n_users, cm.assignment.mean_abs_r);
    print!("{:<12}", "");
    for c in &cm.col_names {
        print!(" {c:>10}");
    }
    println!();
    for (i, r) in cm.row_names.iter().enumerate() {
        print!("{r:<12}");
        for j in 0..cm.col_names.len() {
            print!(" {:>10.3}", cm.r[(i, j)]);
        }
        println!();
    }
    Ok(())
}
