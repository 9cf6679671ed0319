//! Run manifests and digest-tracked output directories.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{PnlError, Result};

use super::config::{parse_config, ExperimentConfig};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const CONFIG_FILE: &str = "config.toml";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    /// Path relative to the run directory (inputs: as given).
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentManifest {
    pub experiment_id: String,
    pub command: String,
    pub code_version: String,
    pub master_seed: u64,
    /// Canonical configuration text; feeding it back reproduces the run.
    pub config: String,
    pub config_sha256: String,
    pub started_unix: u64,
    pub finished_unix: u64,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
}

/// Writes files into a run directory and records their digests.
#[derive(Debug)]
pub struct RunDir {
    root: PathBuf,
    outputs: Vec<FileDigest>,
}

impl RunDir {
    pub fn create(root: &Path) -> Result<Self> {
        fs::create_dir_all(root)?;
        Ok(RunDir { root: root.to_path_buf(), outputs: Vec::new() })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        fs::write(self.root.join(name), bytes)?;
        self.outputs.push(FileDigest { path: name.to_string(), bytes: bytes.len() as u64, sha256: sha256_hex(bytes) });
        Ok(())
    }

    pub fn outputs(&self) -> &[FileDigest] {
        &self.outputs
    }

    /// Writes `manifest.json` (not itself listed among the outputs).
    pub fn finish(
        self,
        command: &str,
        cfg: &ExperimentConfig,
        inputs: Vec<FileDigest>,
        started_unix: u64,
    ) -> Result<ExperimentManifest> {
        let config = cfg.to_toml()?;
        let config_sha256 = sha256_hex(config.as_bytes());
        let manifest = ExperimentManifest {
            experiment_id: format!("{command}-{}-{}", &config_sha256[..12], cfg.run.seed),
            command: command.to_string(),
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            master_seed: cfg.run.seed,
            config,
            config_sha256,
            started_unix,
            finished_unix: unix_now(),
            inputs,
            outputs: self.outputs,
        };
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        fs::write(self.root.join(MANIFEST_FILE), text)?;
        Ok(manifest)
    }
}

pub(crate) fn start_clock() -> u64 {
    unix_now()
}

pub fn digest_file(path: &Path) -> Result<FileDigest> {
    let bytes = fs::read(path)?;
    Ok(FileDigest { path: path.display().to_string(), bytes: bytes.len() as u64, sha256: sha256_hex(&bytes) })
}

/// Reads a configuration from a TOML file or from the `config` field of a
/// manifest.
pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path)
        .map_err(|e| PnlError::InvalidInput(format!("cannot read {}: {e}", path.display())))?;
    if text.trim_start().starts_with('{') {
        let manifest: ExperimentManifest = serde_json::from_str(&text)?;
        return parse_config(&manifest.config);
    }
    parse_config(&text)
}

/// Checks every recorded output digest of a run directory against the files
/// on disk; returns the paths that differ or are missing.
pub fn verify_outputs(dir: &Path, manifest: &ExperimentManifest) -> Vec<String> {
    manifest
        .outputs
        .iter()
        .filter(|o| fs::read(dir.join(&o.path)).map(|b| sha256_hex(&b) != o.sha256).unwrap_or(true))
        .map(|o| o.path.clone())
        .collect()
}

pub fn read_manifest(dir: &Path) -> Result<ExperimentManifest> {
    let text = fs::read_to_string(dir.join(MANIFEST_FILE))
        .map_err(|e| PnlError::InvalidInput(format!("no manifest in {}: {e}", dir.display())))?;
    Ok(serde_json::from_str(&text)?)
}
