//! File helpers: atomic writes, content hashes, score tables.

use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Write via a sibling temp file and rename, so readers never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::InvalidInput(format!("not a file path: {}", path.display())))?;
    let tmp = path.with_file_name(format!(
        ".{}.tmp-{}",
        file_name.to_string_lossy(),
        std::process::id()
    ));
    {
        let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
        f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    }
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_slice(&bytes)?)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

/// Hash of a matrix's shape and exact bit patterns.
pub fn matrix_hash(m: &DMatrix<f64>) -> String {
    let mut h = Sha256::new();
    h.update((m.nrows() as u64).to_le_bytes());
    h.update((m.ncols() as u64).to_le_bytes());
    for v in m.iter() {
        h.update(v.to_bits().to_le_bytes());
    }
    hex::encode(h.finalize())
}

/// Serialize a labelled table as CSV: `id_header,<columns...>`.
pub fn table_to_csv(
    id_header: &str,
    row_ids: &[String],
    columns: &[String],
    values: &DMatrix<f64>,
) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec![id_header.to_string()];
    header.extend(columns.iter().cloned());
    w.write_record(&header)?;
    for (i, id) in row_ids.iter().enumerate() {
        let mut rec = vec![id.clone()];
        rec.extend((0..values.ncols()).map(|j| values[(i, j)].to_string()));
        w.write_record(&rec)?;
    }
    w.into_inner()
        .map_err(|e| Error::InvalidInput(format!("csv flush: {e}")))
}

/// A labelled numeric table read from CSV; the first column holds row ids.
/// Lines starting with `#` are skipped.
#[derive(Debug, Clone)]
pub struct Table {
    pub row_ids: Vec<String>,
    pub columns: Vec<String>,
    /// Missing cells are `NaN`.
    pub values: DMatrix<f64>,
}

pub fn read_table(path: &Path) -> Result<Table> {
    let mut rdr = csv::ReaderBuilder::new()
        .flexible(false)
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => Error::InvalidInput(format!("{}: {other:?}", path.display())),
        })?;
    let headers = rdr.headers()?.clone();
    if headers.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "{}: expected an id column and at least one value column",
            path.display()
        )));
    }
    let columns: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
    let mut row_ids = Vec::new();
    let mut flat = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        row_ids.push(rec[0].to_string());
        for (j, cell) in rec.iter().skip(1).enumerate() {
            let cell = cell.trim();
            let v = if cell.is_empty() || cell.eq_ignore_ascii_case("na") || cell.eq_ignore_ascii_case("nan") {
                f64::NAN
            } else {
                cell.parse::<f64>().map_err(|_| {
                    Error::InvalidInput(format!(
                        "{} row {}: column {} is not numeric: {cell:?}",
                        path.display(),
                        line + 2,
                        columns[j]
                    ))
                })?
            };
            flat.push(v);
        }
    }
    let values = DMatrix::from_row_slice(row_ids.len(), columns.len(), &flat);
    Ok(Table {
        row_ids,
        columns,
        values,
    })
}
