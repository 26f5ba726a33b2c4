//! Tensor archives: a JSON manifest plus one blob of little-endian `f32`
//! values, row-major, in manifest order. Used by checkpoints and by the
//! feature archive of generated worlds.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{BtnError, Result};

pub const ARCHIVE_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Byte offset into the blob.
    pub offset: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArchiveManifest {
    pub version: u32,
    pub r: usize,
    pub h_dim: usize,
    pub vocab_hash: String,
    pub tensors: Vec<TensorEntry>,
    /// Free-form metadata (model options, feature provenance).
    #[serde(default)]
    pub meta: serde_json::Value,
}

/// A named tensor held in `f64` for the duration of I/O.
#[derive(Clone, Debug, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl NamedTensor {
    pub fn new(name: impl Into<String>, shape: Vec<usize>, data: Vec<f64>) -> Self {
        NamedTensor { name: name.into(), shape, data }
    }
}

/// Writes `<stem>.json` and `<stem>.bin` into `dir`.
pub fn write_archive(
    dir: &Path,
    stem: &str,
    r: usize,
    h_dim: usize,
    vocab_hash: &str,
    meta: serde_json::Value,
    tensors: &[NamedTensor],
) -> Result<ArchiveManifest> {
    fs::create_dir_all(dir)?;
    let mut blob = Vec::new();
    let mut entries = Vec::with_capacity(tensors.len());
    for t in tensors {
        let expected: usize = t.shape.iter().product();
        if expected != t.data.len() {
            return Err(BtnError::Format(format!(
                "tensor {} has {} values but shape {:?}",
                t.name,
                t.data.len(),
                t.shape
            )));
        }
        entries.push(TensorEntry { name: t.name.clone(), shape: t.shape.clone(), offset: blob.len() });
        for &v in &t.data {
            blob.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    let manifest = ArchiveManifest {
        version: ARCHIVE_VERSION,
        r,
        h_dim,
        vocab_hash: vocab_hash.to_string(),
        tensors: entries,
        meta,
    };
    fs::write(dir.join(format!("{stem}.bin")), &blob)?;
    fs::write(dir.join(format!("{stem}.json")), serde_json::to_vec_pretty(&manifest)?)?;
    Ok(manifest)
}

pub fn read_archive(dir: &Path, stem: &str) -> Result<(ArchiveManifest, Vec<NamedTensor>)> {
    let manifest: ArchiveManifest =
        serde_json::from_slice(&fs::read(dir.join(format!("{stem}.json")))?)?;
    if manifest.version != ARCHIVE_VERSION {
        return Err(BtnError::Format(format!("unsupported archive version {}", manifest.version)));
    }
    let blob = fs::read(dir.join(format!("{stem}.bin")))?;
    let mut out = Vec::with_capacity(manifest.tensors.len());
    for e in &manifest.tensors {
        let n: usize = e.shape.iter().product();
        let end = e.offset + 4 * n;
        if end > blob.len() {
            return Err(BtnError::Format(format!("tensor {} overruns the blob", e.name)));
        }
        let data = blob[e.offset..end]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        out.push(NamedTensor { name: e.name.clone(), shape: e.shape.clone(), data });
    }
    Ok((manifest, out))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    Ok(hex::encode(Sha256::digest(fs::read(path)?)))
}

pub fn sha256_bytes(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    fs::write(path, bytes)?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let bytes = fs::read(path).map_err(|e| {
        BtnError::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
    })?;
    Ok(serde_json::from_slice(&bytes)?)
}
