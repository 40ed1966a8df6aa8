//! Run manifest: what was run, on which inputs, what it wrote and whether
//! each check passed.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckStatus {
    Pass,
    Fail,
    Skipped,
}

impl CheckStatus {
    pub fn from_bool(ok: bool) -> Self {
        if ok {
            Self::Pass
        } else {
            Self::Fail
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct OutputEntry {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    /// Path of the scenario config, when the command reads one.
    pub config_path: Option<String>,
    /// SHA-256 of the config bytes, or of the canonical parameter JSON when
    /// the command takes its inputs from flags.
    pub config_sha256: String,
    pub outputs: Vec<OutputEntry>,
    pub residuals: BTreeMap<String, f64>,
    pub checks: BTreeMap<String, CheckStatus>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl RunManifest {
    pub fn new(command: &str, config_path: Option<&Path>, config_bytes: &[u8]) -> Self {
        Self {
            command: command.to_owned(),
            config_path: config_path.map(|p| p.display().to_string()),
            config_sha256: sha256_hex(config_bytes),
            outputs: Vec::new(),
            residuals: BTreeMap::new(),
            checks: BTreeMap::new(),
        }
    }

    pub fn residual(&mut self, name: &str, value: f64) {
        self.residuals.insert(name.to_owned(), value);
    }

    pub fn check(&mut self, name: &str, status: CheckStatus) {
        self.checks.insert(name.to_owned(), status);
    }

    pub fn passed(&self) -> bool {
        self.checks.values().all(|c| *c != CheckStatus::Fail)
    }

    /// Writes `bytes` to `dir/name` and records its checksum.
    pub fn write_output(
        &mut self,
        dir: &Path,
        name: &str,
        bytes: &[u8],
    ) -> Result<PathBuf, CliError> {
        let path = dir.join(name);
        fs::write(&path, bytes).map_err(|e| CliError::Output {
            path: path.clone(),
            message: e.to_string(),
        })?;
        self.outputs.push(OutputEntry {
            path: name.to_owned(),
            sha256: sha256_hex(bytes),
        });
        Ok(path)
    }

    /// Writes the manifest itself as pretty JSON.
    pub fn finish(&self, dir: &Path) -> Result<PathBuf, CliError> {
        let path = dir.join(MANIFEST_FILE);
        let mut text = serde_json::to_string_pretty(self).expect("manifest serialises");
        text.push('\n');
        fs::write(&path, text).map_err(|e| CliError::Output {
            path: path.clone(),
            message: e.to_string(),
        })?;
        Ok(path)
    }
}
