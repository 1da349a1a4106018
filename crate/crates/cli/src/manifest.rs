//! Run manifest written next to every output.

use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::Failure;

#[derive(Debug, Serialize)]
pub struct FileHash {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    pub seed: u64,
    pub config: Option<String>,
    pub options: serde_json::Value,
    pub inputs: Vec<FileHash>,
    pub outputs: Vec<FileHash>,
}

pub fn hash_file(path: &Path) -> Result<FileHash, Failure> {
    let bytes = std::fs::read(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
    Ok(FileHash {
        path: path.display().to_string(),
        sha256: hex::encode(Sha256::digest(&bytes)),
    })
}

impl RunManifest {
    pub fn new(command: &str, seed: u64, config: Option<&PathBuf>, options: serde_json::Value) -> Result<Self, Failure> {
        let mut m = Self {
            command: command.to_owned(),
            tool_version: env!("CARGO_PKG_VERSION").to_owned(),
            seed,
            config: config.map(|p| p.display().to_string()),
            options,
            inputs: Vec::new(),
            outputs: Vec::new(),
        };
        if let Some(c) = config {
            m.inputs.push(hash_file(c)?);
        }
        Ok(m)
    }

    pub fn input(&mut self, path: &Path) -> Result<(), Failure> {
        self.inputs.push(hash_file(path)?);
        Ok(())
    }

    pub fn output(&mut self, path: &Path) -> Result<(), Failure> {
        self.outputs.push(hash_file(path)?);
        Ok(())
    }

    /// Writes `<dir>/<command>.manifest.json`.
    pub fn write(&self, dir: &Path) -> Result<PathBuf, Failure> {
        let path = dir.join(format!("{}.manifest.json", self.command));
        psmgc::io::write_json(&path, self).map_err(|e| Failure::Input(e.to_string()))?;
        Ok(path)
    }
}
