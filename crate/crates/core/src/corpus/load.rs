use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Gender, Message};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MessageFormat {
    Jsonl,
    Csv,
}

impl MessageFormat {
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "jsonl" | "ndjson" | "json" => Some(Self::Jsonl),
            "csv" => Some(Self::Csv),
            _ => None,
        }
    }
}

/// A rejected input row. `line` is 1-based and counts the CSV header.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowError {
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct LoadedMessages {
    pub messages: Vec<Message>,
    pub malformed: Vec<RowError>,
}

pub fn load_messages(path: &Path, format: MessageFormat) -> Result<LoadedMessages> {
    match format {
        MessageFormat::Jsonl => load_jsonl(path),
        MessageFormat::Csv => load_csv(path),
    }
}

fn load_jsonl(path: &Path) -> Result<LoadedMessages> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = LoadedMessages::default();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |reason: String| RowError {
            line: lineno,
            reason,
        };
        let value: serde_json::Value = match serde_json::from_str(&line) {
            Ok(v) => v,
            Err(e) => {
                out.malformed.push(bad(format!("invalid json: {e}")));
                continue;
            }
        };
        let user_id = match value.get("user_id") {
            Some(serde_json::Value::String(s)) if !s.is_empty() => s.clone(),
            Some(serde_json::Value::Number(n)) => n.to_string(),
            _ => {
                out.malformed.push(bad("missing or empty \"user_id\"".into()));
                continue;
            }
        };
        let text = match value.get("text") {
            Some(serde_json::Value::String(s)) => s.clone(),
            Some(serde_json::Value::Null) | None => String::new(),
            Some(_) => {
                out.malformed.push(bad("\"text\" is not a string".into()));
                continue;
            }
        };
        let timestamp = match value.get("timestamp") {
            None | Some(serde_json::Value::Null) => None,
            Some(v) => match v.as_i64() {
                Some(t) => Some(t),
                None => {
                    out.malformed
                        .push(bad("\"timestamp\" is not an integer".into()));
                    continue;
                }
            },
        };
        out.messages.push(Message {
            user_id,
            text,
            timestamp,
        });
    }
    Ok(out)
}

fn load_csv(path: &Path) -> Result<LoadedMessages> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(file);
    let mut out = LoadedMessages::default();
    let headers = match rdr.headers() {
        Ok(h) => h.clone(),
        Err(_) => return Ok(out),
    };
    if headers.is_empty() {
        return Ok(out);
    }
    let col = |name: &str| headers.iter().position(|h| h.trim() == name);
    let (uid, txt) = match (col("user_id"), col("text")) {
        (Some(u), Some(t)) => (u, t),
        _ => {
            return Err(Error::InvalidInput(format!(
                "{}: header must contain user_id,text[,timestamp]",
                path.display()
            )))
        }
    };
    let ts = col("timestamp");
    for (idx, rec) in rdr.records().enumerate() {
        let lineno = idx + 2;
        let rec = match rec {
            Ok(r) => r,
            Err(e) => {
                out.malformed.push(RowError {
                    line: lineno,
                    reason: format!("unreadable row: {e}"),
                });
                continue;
            }
        };
        let user_id = rec.get(uid).unwrap_or("").trim().to_string();
        if user_id.is_empty() {
            out.malformed.push(RowError {
                line: lineno,
                reason: "missing user_id".into(),
            });
            continue;
        }
        let timestamp = match ts.and_then(|c| rec.get(c)).map(str::trim) {
            None | Some("") => None,
            Some(s) => match s.parse::<i64>() {
                Ok(t) => Some(t),
                Err(_) => {
                    out.malformed.push(RowError {
                        line: lineno,
                        reason: format!("timestamp {s:?} is not an integer"),
                    });
                    continue;
                }
            },
        };
        out.messages.push(Message {
            user_id,
            text: rec.get(txt).unwrap_or("").to_string(),
            timestamp,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemographicRow {
    pub age: Option<f64>,
    pub gender: Gender,
    /// `Some(false)` excludes the user (locale / language filter).
    pub include: Option<bool>,
}

pub type DemographicsTable = HashMap<String, DemographicRow>;

/// Read `user_id,age,gender[,include]`.
pub fn load_demographics(path: &Path) -> Result<DemographicsTable> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::InvalidInput(format!("{}: {other:?}", path.display())),
    })?;
    let headers = rdr.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h.trim() == name);
    let uid = col("user_id").ok_or_else(|| {
        Error::InvalidInput(format!("{}: missing user_id column", path.display()))
    })?;
    let (age_c, gender_c, include_c) = (col("age"), col("gender"), col("include"));
    let mut table = HashMap::new();
    for (idx, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let lineno = idx + 2;
        let user = rec.get(uid).unwrap_or("").trim().to_string();
        if user.is_empty() {
            return Err(Error::InvalidInput(format!(
                "{} line {lineno}: empty user_id",
                path.display()
            )));
        }
        let age = match age_c.and_then(|c| rec.get(c)).map(str::trim) {
            None | Some("") => None,
            Some(s) => Some(s.parse::<f64>().map_err(|_| {
                Error::InvalidInput(format!("{} line {lineno}: bad age {s:?}", path.display()))
            })?),
        };
        let gender = gender_c
            .and_then(|c| rec.get(c))
            .map(Gender::parse)
            .unwrap_or(Gender::Unknown);
        let include = match include_c.and_then(|c| rec.get(c)).map(str::trim) {
            None | Some("") => None,
            Some("1") | Some("true") => Some(true),
            Some("0") | Some("false") => Some(false),
            Some(s) => {
                return Err(Error::InvalidInput(format!(
                    "{} line {lineno}: include must be 0 or 1, got {s:?}",
                    path.display()
                )))
            }
        };
        table.insert(
            user,
            DemographicRow {
                age,
                gender,
                include,
            },
        );
    }
    Ok(table)
}
