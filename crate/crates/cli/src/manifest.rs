//! `manifest.json`: the merged config, seeds and SHA-256 checksums of every
//! input and artifact of one invocation.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: PathBuf,
    pub sha256: String,
}

impl FileDigest {
    pub fn of(path: &Path, recorded_as: PathBuf) -> Result<Self, CliError> {
        Ok(Self {
            path: recorded_as,
            sha256: sha256_file(path)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    /// Merged configuration in TOML form.
    pub config: String,
    pub config_hash: String,
    pub base_seed: Option<u64>,
    pub run_seeds: Vec<u64>,
    /// Files read, with paths as given on the command line.
    pub inputs: Vec<FileDigest>,
    /// Files written, relative to the output directory.
    pub artifacts: Vec<FileDigest>,
}

impl Manifest {
    pub fn new(command: &str, config: String) -> Self {
        let config_hash = hex::encode(Sha256::digest(config.as_bytes()));
        Self {
            tool: "sensorfix".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            config,
            config_hash,
            base_seed: None,
            run_seeds: Vec::new(),
            inputs: Vec::new(),
            artifacts: Vec::new(),
        }
    }

    pub fn add_input(&mut self, path: &Path) -> Result<(), CliError> {
        self.inputs.push(FileDigest::of(path, path.to_path_buf())?);
        Ok(())
    }

    /// Record every artifact under `dir` (checksums of the files as written).
    pub fn add_artifacts(&mut self, dir: &Path, paths: &[PathBuf]) -> Result<(), CliError> {
        for p in paths {
            let rel = p.strip_prefix(dir).unwrap_or(p).to_path_buf();
            self.artifacts.push(FileDigest::of(p, rel)?);
        }
        self.artifacts.sort_by(|a, b| a.path.cmp(&b.path));
        Ok(())
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf, CliError> {
        let path = dir.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        fs::write(&path, text + "\n").map_err(|e| CliError::io(&path, e))?;
        Ok(path)
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::Manifest(format!("{}: {e}", path.display())))
    }

    /// Every input and artifact still has its recorded checksum.
    pub fn verify(&self, dir: &Path) -> Result<(), CliError> {
        let inputs = self.inputs.iter().map(|d| (d.path.clone(), d));
        let artifacts = self.artifacts.iter().map(|d| (dir.join(&d.path), d));
        for (path, d) in inputs.chain(artifacts) {
            let actual = sha256_file(&path)?;
            if actual != d.sha256 {
                return Err(CliError::ChecksumMismatch {
                    path,
                    expected: d.sha256.clone(),
                    actual,
                });
            }
        }
        Ok(())
    }
}

pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}
