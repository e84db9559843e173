//! Checkpoints: a JSON manifest listing `{name, shape, offset}` per tensor
//! plus a raw little-endian `f32` blob. Offsets count bytes into the blob.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    /// Blob file name, relative to the manifest.
    pub blob: String,
    pub tensors: Vec<TensorEntry>,
    /// Free-form metadata (model spec, encoding, ...).
    #[serde(default)]
    pub meta: serde_json::Value,
}

pub fn blob_path(manifest_path: &Path) -> PathBuf {
    manifest_path.with_extension("bin")
}

pub fn encode(named: &[(String, &Tensor)], blob: &str, meta: serde_json::Value) -> (Manifest, Vec<u8>) {
    let mut bytes = Vec::new();
    let mut tensors = Vec::with_capacity(named.len());
    for (name, t) in named {
        tensors.push(TensorEntry {
            name: name.clone(),
            shape: t.shape().to_vec(),
            offset: bytes.len(),
        });
        for &v in t.data() {
            bytes.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    (
        Manifest {
            blob: blob.to_string(),
            tensors,
            meta,
        },
        bytes,
    )
}

pub fn decode(manifest: &Manifest, bytes: &[u8]) -> Result<Vec<(String, Tensor)>> {
    manifest
        .tensors
        .iter()
        .map(|e| {
            let len: usize = e.shape.iter().product();
            let raw = bytes.get(e.offset..e.offset + 4 * len).ok_or_else(|| {
                Error::Corrupt(format!("tensor '{}' runs past the end of the blob", e.name))
            })?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
                .collect();
            Ok((e.name.clone(), Tensor::new(&e.shape, data)?))
        })
        .collect()
}

pub fn save(manifest_path: impl AsRef<Path>, named: &[(String, &Tensor)], meta: serde_json::Value) -> Result<()> {
    let manifest_path = manifest_path.as_ref();
    let blob = blob_path(manifest_path);
    let blob_name = blob
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "checkpoint.bin".into());
    let (manifest, bytes) = encode(named, &blob_name, meta);
    fs::write(&blob, bytes).map_err(|e| Error::write(&blob, e))?;
    let json = serde_json::to_vec_pretty(&manifest)?;
    fs::write(manifest_path, json).map_err(|e| Error::write(manifest_path, e))
}

pub fn load(manifest_path: impl AsRef<Path>) -> Result<(Manifest, Vec<(String, Tensor)>)> {
    let manifest_path = manifest_path.as_ref();
    let text = fs::read(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
    let manifest: Manifest = serde_json::from_slice(&text)?;
    let blob = manifest_path
        .parent()
        .unwrap_or_else(|| Path::new("."))
        .join(&manifest.blob);
    let bytes = fs::read(&blob).map_err(|e| Error::io(&blob, e))?;
    let tensors = decode(&manifest, &bytes)?;
    Ok((manifest, tensors))
}
