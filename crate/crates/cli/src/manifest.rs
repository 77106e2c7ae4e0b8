use std::collections::BTreeMap;
use std::path::Path;

use lingtraits_core::io::{sha256_file, write_atomic};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::config::PipelineConfig;

/// What is needed to reproduce an output: config hash, input hashes, seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config_hash: String,
    /// Input path to sha256 of its contents.
    pub inputs: BTreeMap<String, String>,
    pub seeds: BTreeMap<String, u64>,
}

impl Manifest {
    pub fn new(command: &str, cfg: &PipelineConfig) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            config_hash: cfg.hash(),
            inputs: BTreeMap::new(),
            seeds: BTreeMap::from([("seed".to_string(), cfg.seed)]),
        }
    }

    pub fn input(&mut self, path: &Path) -> lingtraits_core::Result<()> {
        self.inputs.insert(path.display().to_string(), sha256_file(path)?);
        Ok(())
    }

    pub fn seed(&mut self, name: &str, value: u64) {
        self.seeds.insert(name.to_string(), value);
    }

    /// JSON output with the manifest under a top-level `manifest` key.
    /// Non-object payloads are wrapped as `{"manifest", "data"}`.
    pub fn write_json<T: Serialize>(&self, path: &Path, payload: &T) -> anyhow::Result<()> {
        let value = serde_json::to_value(payload)?;
        let mut obj = match value {
            Value::Object(map) => map,
            other => {
                let mut m = serde_json::Map::new();
                m.insert("data".into(), other);
                m
            }
        };
        obj.insert("manifest".into(), serde_json::to_value(self)?);
        let mut bytes = serde_json::to_vec_pretty(&Value::Object(obj))?;
        bytes.push(b'\n');
        write_atomic(path, &bytes)?;
        Ok(())
    }

    /// CSV output preceded by a `# manifest: {...}` comment line.
    pub fn write_csv(&self, path: &Path, csv: &[u8]) -> anyhow::Result<()> {
        let mut bytes = format!("# manifest: {}\n", serde_json::to_string(self)?).into_bytes();
        bytes.extend_from_slice(csv);
        write_atomic(path, &bytes)?;
        Ok(())
    }
}

/// Manifest embedded in a JSON or CSV output written by this tool.
pub fn read_manifest(path: &Path) -> anyhow::Result<Manifest> {
    let text = std::fs::read_to_string(path)?;
    if let Some(rest) = text.strip_prefix("# manifest: ") {
        let line = rest.lines().next().unwrap_or_default();
        return Ok(serde_json::from_str(line)?);
    }
    let v: Value = serde_json::from_str(&text)?;
    let m = v
        .get("manifest")
        .ok_or_else(|| anyhow::anyhow!("{}: no manifest", path.display()))?;
    Ok(serde_json::from_value(m.clone())?)
}
