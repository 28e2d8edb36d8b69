//! Run manifests: the resolved configuration plus content hashes of every
//! input and output file, so that two runs are comparable at a glance —
//! equal manifests mean equal inputs, equal settings, and byte-equal
//! outputs.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use lspkit::Result;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;

#[derive(Debug, Serialize)]
pub struct Manifest<'a> {
    pub command: &'a str,
    pub config: &'a ExperimentConfig,
    pub config_sha256: String,
    /// file name → sha256 of its content.
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn hash_file(path: &Path) -> Result<String> {
    Ok(sha256_hex(&fs::read(path)?))
}

impl<'a> Manifest<'a> {
    pub fn new(command: &'a str, config: &'a ExperimentConfig) -> Manifest<'a> {
        let canonical = serde_json::to_string(config).expect("config serializes");
        Manifest {
            command,
            config,
            config_sha256: sha256_hex(canonical.as_bytes()),
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
        }
    }

    pub fn add_input(&mut self, path: &Path) -> Result<()> {
        self.inputs
            .insert(path.display().to_string(), hash_file(path)?);
        Ok(())
    }

    pub fn add_output(&mut self, path: &Path) -> Result<()> {
        let name = path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.display().to_string());
        self.outputs.insert(name, hash_file(path)?);
        Ok(())
    }

    /// Serialize to `manifest.json` in `dir` and record the path written.
    pub fn write(&self, dir: &Path) -> Result<std::path::PathBuf> {
        let path = dir.join("manifest.json");
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        fs::write(&path, text)?;
        Ok(path)
    }
}
