//! Run manifests: what was run, on which inputs, with which settings.

use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize)]
pub struct InputFile {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub command: String,
    pub version: String,
    /// Effective settings; replaying them on the same inputs reproduces the outputs.
    pub config: serde_json::Value,
    pub config_sha256: String,
    pub seed: Option<u64>,
    pub inputs: Vec<InputFile>,
    pub outputs: Vec<String>,
    pub started_at: String,
    pub finished_at: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn now_rfc3339() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

impl RunManifest {
    pub fn new(command: &str, config: serde_json::Value, seed: Option<u64>, started_at: String) -> Self {
        let config_sha256 = sha256_hex(config.to_string().as_bytes());
        RunManifest {
            schema_version: MANIFEST_SCHEMA_VERSION,
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config,
            config_sha256,
            seed,
            inputs: Vec::new(),
            outputs: Vec::new(),
            started_at,
            finished_at: String::new(),
        }
    }

    pub fn input(&mut self, path: &Path, bytes: &[u8]) {
        self.inputs.push(InputFile { path: path.display().to_string(), sha256: sha256_hex(bytes) });
    }

    pub fn write(mut self, dir: &Path) -> Result<(), CliError> {
        self.finished_at = now_rfc3339();
        let text = serde_json::to_string_pretty(&self).expect("manifest serializes") + "\n";
        let path = dir.join("manifest.json");
        std::fs::write(&path, text).map_err(|e| CliError::io(format!("writing {}", path.display()), e))
    }
}
