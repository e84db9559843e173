//! Run manifests: what was run, with which settings, on which inputs.

use std::fs;
use std::path::{Path, PathBuf};

use dclse_core::{Error, Result};
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

pub const MANIFEST_FILE: &str = "manifest.json";

/// SHA-256 over a file, or over every file below a directory in sorted path
/// order (each contributes its relative path and its bytes).
pub fn content_hash(path: &Path) -> Result<String> {
    let mut hasher = Sha256::new();
    if path.is_dir() {
        let mut files = Vec::new();
        collect_files(path, &mut files)?;
        files.sort();
        for f in files {
            let rel = f.strip_prefix(path).unwrap_or(&f);
            hasher.update(rel.to_string_lossy().as_bytes());
            hasher.update([0u8]);
            hasher.update(fs::read(&f).map_err(|e| Error::Io { path: f.clone(), source: e })?);
        }
    } else {
        hasher.update(fs::read(path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?);
    }
    Ok(hex::encode(hasher.finalize()))
}

fn collect_files(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let entries = fs::read_dir(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })?;
    for entry in entries {
        let p = entry
            .map_err(|e| Error::Io {
                path: dir.to_path_buf(),
                source: e,
            })?
            .path();
        if p.is_dir() {
            collect_files(&p, out)?;
        } else {
            out.push(p);
        }
    }
    Ok(())
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub command: String,
    pub tool_version: &'static str,
    pub config: Value,
    pub seeds: Value,
    pub inputs: Vec<InputHash>,
    pub outputs: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub thresholds: Option<Vec<f64>>,
}

#[derive(Debug, Serialize)]
pub struct InputHash {
    pub path: String,
    pub sha256: String,
}

impl Manifest {
    pub fn new(command: &str, config: impl Serialize) -> Result<Self> {
        Ok(Self {
            command: command.to_string(),
            tool_version: env!("CARGO_PKG_VERSION"),
            config: serde_json::to_value(config)?,
            seeds: json!({}),
            inputs: Vec::new(),
            outputs: Vec::new(),
            thresholds: None,
        })
    }

    pub fn input(mut self, path: &Path) -> Result<Self> {
        self.inputs.push(InputHash {
            path: path.display().to_string(),
            sha256: content_hash(path)?,
        });
        Ok(self)
    }

    pub fn seeds(mut self, seeds: Value) -> Self {
        self.seeds = seeds;
        self
    }

    pub fn output(mut self, name: impl Into<String>) -> Self {
        self.outputs.push(name.into());
        self
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let path = dir.join(MANIFEST_FILE);
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(&path, text).map_err(|e| Error::Write { path, source: e })
    }
}
