//! Stage manifests: content hashes of inputs and outputs plus a config
//! snapshot, enabling staleness checks and exact replay.

use crate::{data_err, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StageManifest {
    pub stage: String,
    pub toolkit_version: String,
    pub config_hash: String,
    /// path (relative to the output dir) → sha256
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    pub config_snapshot: serde_json::Value,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    hex::encode(hasher.finalize())
}

pub fn hash_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path)
        .map_err(|e| data_err(format!("cannot hash {}: {e}", path.display())))?;
    Ok(sha256_hex(&bytes))
}

pub struct ManifestWriter {
    out_dir: PathBuf,
    stage: String,
    config_hash: String,
    config_snapshot: serde_json::Value,
    inputs: BTreeMap<String, String>,
    outputs: BTreeMap<String, String>,
}

impl ManifestWriter {
    pub fn new(out_dir: &Path, stage: &str, config_snapshot: &str) -> Self {
        ManifestWriter {
            out_dir: out_dir.to_path_buf(),
            stage: stage.to_string(),
            config_hash: sha256_hex(config_snapshot.as_bytes()),
            config_snapshot: serde_json::from_str(config_snapshot)
                .unwrap_or(serde_json::Value::Null),
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
        }
    }

    pub fn record_input(&mut self, path: &Path) -> Result<()> {
        self.inputs
            .insert(display_key(&self.out_dir, path), hash_file(path)?);
        Ok(())
    }

    pub fn record_output(&mut self, path: &Path) -> Result<()> {
        self.outputs
            .insert(display_key(&self.out_dir, path), hash_file(path)?);
        Ok(())
    }

    pub fn finish(self) -> Result<()> {
        let manifest = StageManifest {
            stage: self.stage.clone(),
            toolkit_version: crate::TOOLKIT_VERSION.to_string(),
            config_hash: self.config_hash,
            inputs: self.inputs,
            outputs: self.outputs,
            config_snapshot: self.config_snapshot,
        };
        let dir = self.out_dir.join("manifests");
        std::fs::create_dir_all(&dir)
            .map_err(|e| data_err(format!("cannot create {}: {e}", dir.display())))?;
        let path = dir.join(format!("{}.json", self.stage));
        std::fs::write(
            &path,
            serde_json::to_string_pretty(&manifest).expect("manifest serializes"),
        )
        .map_err(|e| data_err(format!("cannot write {}: {e}", path.display())))?;
        Ok(())
    }
}

fn display_key(out_dir: &Path, path: &Path) -> String {
    path.strip_prefix(out_dir)
        .unwrap_or(path)
        .to_string_lossy()
        .replace('\\', "/")
}

pub fn load_manifest(out_dir: &Path, stage: &str) -> Result<StageManifest> {
    let path = out_dir.join("manifests").join(format!("{stage}.json"));
    let text = std::fs::read_to_string(&path).map_err(|_| {
        data_err(format!(
            "missing manifest for stage '{stage}'; run `affbench {stage}` first"
        ))
    })?;
    serde_json::from_str(&text).map_err(|e| data_err(format!("corrupt manifest {stage}: {e}")))
}

/// Verifies that every upstream stage ran under the same config and that
/// its recorded outputs are unmodified on disk.
pub fn check_upstream(out_dir: &Path, config_snapshot: &str, stages: &[&str]) -> Result<()> {
    let want_hash = sha256_hex(config_snapshot.as_bytes());
    for stage in stages {
        let manifest = load_manifest(out_dir, stage)?;
        if manifest.config_hash != want_hash {
            return Err(data_err(format!(
                "stage '{stage}' ran under a different config (hash {} vs {}); re-run `affbench {stage}` with the current config",
                &manifest.config_hash[..12],
                &want_hash[..12]
            )));
        }
        for (rel, want) in &manifest.outputs {
            let path = out_dir.join(rel);
            let got = hash_file(&path).map_err(|_| {
                data_err(format!(
                    "output {rel} of stage '{stage}' is missing; re-run `affbench {stage}`"
                ))
            })?;
            if &got != want {
                return Err(data_err(format!(
                    "output {rel} of stage '{stage}' changed on disk; re-run `affbench {stage}` (stale upstream hash)"
                )));
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn staleness_detected_after_modification() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path();
        let artifact = out.join("artifact.txt");
        std::fs::write(&artifact, "v1").unwrap();

        let mut w = ManifestWriter::new(out, "prepare", "{}");
        w.record_output(&artifact).unwrap();
        w.finish().unwrap();

        check_upstream(out, "{}", &["prepare"]).unwrap();

        std::fs::write(&artifact, "v2").unwrap();
        let err = check_upstream(out, "{}", &["prepare"]).unwrap_err();
        assert!(err.to_string().contains("stale"), "{err}");
    }

    #[test]
    fn config_change_detected() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path();
        let mut w = ManifestWriter::new(out, "split", "{\"a\":1}");
        w.finish().unwrap();
        let err = check_upstream(out, "{\"a\":2}", &["split"]).unwrap_err();
        assert!(err.to_string().contains("different config"), "{err}");
    }

    #[test]
    fn missing_manifest_names_stage() {
        let dir = tempfile::tempdir().unwrap();
        let err = check_upstream(dir.path(), "{}", &["similarity"]).unwrap_err();
        assert!(err.to_string().contains("similarity"), "{err}");
    }
}
