//! Run manifests written next to every output.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::formats::{write_json, FormatError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config_hash: String,
    /// Input path → SHA-256 of its contents.
    pub inputs: BTreeMap<String, String>,
    pub seeds: Vec<u64>,
    pub version: String,
    pub started_at_ms: i64,
    pub finished_at_ms: i64,
}

pub fn now_ms() -> i64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis() as i64).unwrap_or(0)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn hash_file(path: &Path) -> Result<String, FormatError> {
    let bytes = std::fs::read(path).map_err(|e| FormatError::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

impl RunManifest {
    /// Starts a manifest; `config` is any serialisable view of the
    /// effective configuration.
    pub fn begin<C: Serialize>(command: &str, config: &C, inputs: &[&Path], seeds: Vec<u64>) -> Result<Self, FormatError> {
        let config_json = serde_json::to_vec(config).expect("configs serialise");
        let mut hashes = BTreeMap::new();
        for p in inputs {
            hashes.insert(p.display().to_string(), hash_file(p)?);
        }
        Ok(Self {
            command: command.to_string(),
            config_hash: sha256_hex(&config_json),
            inputs: hashes,
            seeds,
            version: env!("CARGO_PKG_VERSION").to_string(),
            started_at_ms: now_ms(),
            finished_at_ms: 0,
        })
    }

    /// True when both manifests describe the same computation.
    pub fn same_run(&self, other: &Self) -> bool {
        self.command == other.command
            && self.config_hash == other.config_hash
            && self.inputs.values().eq(other.inputs.values())
            && self.seeds == other.seeds
            && self.version == other.version
    }

    /// `<output>.manifest.json`.
    pub fn path_for(output: &Path) -> PathBuf {
        let mut name = output.file_name().map(|n| n.to_os_string()).unwrap_or_default();
        name.push(".manifest.json");
        output.with_file_name(name)
    }

    pub fn finish(mut self, output: &Path) -> Result<Self, FormatError> {
        self.finished_at_ms = now_ms();
        write_json(&Self::path_for(output), &self)?;
        Ok(self)
    }
}
