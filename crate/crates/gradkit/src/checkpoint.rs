//! Checkpoint I/O: a JSON manifest (names, shapes, hyperparameters) next to
//! a little-endian f64 binary blob. Byte-stable across platforms.

use crate::tensor::TensorData;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Offset into the blob in f64 units.
    pub offset: usize,
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub model_kind: String,
    pub hyperparameters: serde_json::Value,
    pub tensors: Vec<TensorEntry>,
}

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("manifest: {0}")]
    Manifest(#[from] serde_json::Error),
    #[error("blob holds {got} values, manifest expects {want}")]
    BlobSize { got: usize, want: usize },
}

/// Writes `<prefix>.json` and `<prefix>.bin`.
pub fn save_checkpoint(
    prefix: &Path,
    model_kind: &str,
    hyperparameters: serde_json::Value,
    tensors: &[(String, TensorData)],
) -> Result<(), CheckpointError> {
    let mut entries = Vec::with_capacity(tensors.len());
    let mut offset = 0usize;
    let mut blob: Vec<u8> = Vec::new();
    for (name, tensor) in tensors {
        entries.push(TensorEntry {
            name: name.clone(),
            shape: tensor.shape.clone(),
            offset,
            len: tensor.len(),
        });
        offset += tensor.len();
        for v in &tensor.data {
            blob.extend_from_slice(&v.to_le_bytes());
        }
    }
    let manifest = CheckpointManifest {
        model_kind: model_kind.to_string(),
        hyperparameters,
        tensors: entries,
    };
    let mut json_file = std::fs::File::create(prefix.with_extension("json"))?;
    json_file.write_all(serde_json::to_string_pretty(&manifest)?.as_bytes())?;
    std::fs::File::create(prefix.with_extension("bin"))?.write_all(&blob)?;
    Ok(())
}

/// Reads a checkpoint written by [`save_checkpoint`].
pub fn load_checkpoint(
    prefix: &Path,
) -> Result<(CheckpointManifest, Vec<(String, TensorData)>), CheckpointError> {
    let manifest: CheckpointManifest =
        serde_json::from_str(&std::fs::read_to_string(prefix.with_extension("json"))?)?;
    let mut raw = Vec::new();
    std::fs::File::open(prefix.with_extension("bin"))?.read_to_end(&mut raw)?;
    let values: Vec<f64> = raw
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let want: usize = manifest.tensors.iter().map(|t| t.len).sum();
    if values.len() != want {
        return Err(CheckpointError::BlobSize {
            got: values.len(),
            want,
        });
    }
    let mut tensors = Vec::with_capacity(manifest.tensors.len());
    for entry in &manifest.tensors {
        let data = values[entry.offset..entry.offset + entry.len].to_vec();
        tensors.push((entry.name.clone(), TensorData::new(entry.shape.clone(), data)));
    }
    Ok((manifest, tensors))
}
