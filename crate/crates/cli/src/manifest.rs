//! Run manifests written beside every artifact.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    /// Canonical (key-sorted, compact) JSON of the effective configuration.
    pub config: Value,
    /// SHA-256 of `config` in canonical form.
    pub config_digest: String,
    pub master_seed: u64,
    pub workers: usize,
    pub timestamp: String,
    pub artifacts: Vec<PathBuf>,
}

/// serde_json maps are ordered by key, so compact output is canonical.
pub fn canonical(config: &Value) -> String {
    config.to_string()
}

pub fn digest(config: &Value) -> String {
    format!("{:x}", Sha256::digest(canonical(config).as_bytes()))
}

impl RunManifest {
    pub fn new(command: &str, config: Value, master_seed: u64, artifacts: Vec<PathBuf>) -> Self {
        Self {
            command: command.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            config_digest: digest(&config),
            config,
            master_seed,
            workers: rayon::current_num_threads(),
            timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            artifacts,
        }
    }

    /// `<artifact>.manifest.json`.
    pub fn path_for(artifact: &Path) -> PathBuf {
        let mut name = artifact.file_name().unwrap_or_default().to_os_string();
        name.push(".manifest.json");
        artifact.with_file_name(name)
    }

    pub fn write_beside(&self, artifact: &Path) -> CliResult<PathBuf> {
        let path = Self::path_for(artifact);
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(&path, text + "\n").map_err(|source| CliError::Output { path: path.clone(), source })?;
        Ok(path)
    }
}
