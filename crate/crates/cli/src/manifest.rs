//! Run manifests: enough recorded state (subcommand, effective parameters,
//! seed, input hashes, tool version) to reproduce a run's outputs
//! byte-for-byte by reissuing the same command.

use crossmatch_core::Result;
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub subcommand: String,
    pub timestamp: String,
    /// Effective parameters after defaults and environment overrides.
    pub parameters: BTreeMap<String, String>,
    /// sha256 of every input file, keyed by the path as given.
    pub input_hashes: BTreeMap<String, String>,
    pub seed: Option<u64>,
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn new(subcommand: &str) -> Self {
        RunManifest {
            tool: "crossmatch",
            version: env!("CARGO_PKG_VERSION"),
            subcommand: subcommand.to_string(),
            timestamp: chrono::Utc::now().to_rfc3339(),
            parameters: BTreeMap::new(),
            input_hashes: BTreeMap::new(),
            seed: None,
            outputs: Vec::new(),
        }
    }

    pub fn parameter(&mut self, key: &str, value: impl ToString) -> &mut Self {
        self.parameters.insert(key.to_string(), value.to_string());
        self
    }

    pub fn input(&mut self, path: &Path) -> Result<&mut Self> {
        let bytes = std::fs::read(path)?;
        let digest = Sha256::digest(&bytes);
        self.input_hashes.insert(
            path.display().to_string(),
            format!("sha256:{}", hex::encode(digest)),
        );
        Ok(self)
    }

    pub fn output(&mut self, path: &Path) -> &mut Self {
        self.outputs.push(path.display().to_string());
        self
    }

    pub fn write(&self, out_dir: &Path) -> Result<PathBuf> {
        let path = out_dir.join("manifest.json");
        let json = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(&path, json + "\n")?;
        Ok(path)
    }
}
