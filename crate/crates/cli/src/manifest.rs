//! Run manifests: a JSON record of what a subcommand read, wrote, and with
//! which flags — every file listed with a SHA-256 content checksum.
//!
//! Manifests carry no timestamps or host information, so rerunning a
//! command over identical inputs reproduces the manifest byte for byte.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::{write_file, CliError};

#[derive(Debug, Clone, Serialize)]
pub struct FileEntry {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub flags: BTreeMap<String, String>,
    pub inputs: Vec<FileEntry>,
    pub outputs: Vec<FileEntry>,
}

impl RunManifest {
    pub fn new(command: &str) -> RunManifest {
        RunManifest {
            command: command.to_owned(),
            tool_version: env!("CARGO_PKG_VERSION").to_owned(),
            seed: None,
            flags: BTreeMap::new(),
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn seed(&mut self, seed: u64) -> &mut Self {
        self.seed = Some(seed);
        self
    }

    pub fn flag(&mut self, name: &str, value: impl Display) -> &mut Self {
        self.flags.insert(name.to_owned(), value.to_string());
        self
    }

    /// Record an input file (hashed now).
    pub fn input(&mut self, path: &Path) -> Result<&mut Self, CliError> {
        let entry = hash_entry(path)?;
        self.inputs.push(entry);
        Ok(self)
    }

    /// Record an output file (hashed now, so call after writing it).
    pub fn output(&mut self, path: &Path) -> Result<&mut Self, CliError> {
        let entry = hash_entry(path)?;
        self.outputs.push(entry);
        Ok(self)
    }

    /// Write the manifest next to the primary output as
    /// `<output>.manifest.json`.
    pub fn write_beside(&self, primary_output: &Path) -> Result<PathBuf, CliError> {
        let mut name = primary_output
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| "out".to_owned());
        name.push_str(".manifest.json");
        let path = primary_output.with_file_name(name);
        let json = serde_json::to_string_pretty(self).expect("manifest serializes");
        write_file(&path, &format!("{json}\n"))?;
        Ok(path)
    }
}

fn hash_entry(path: &Path) -> Result<FileEntry, CliError> {
    let bytes = std::fs::read(path).map_err(|source| CliError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    let digest = hasher.finalize();
    let mut hex = String::with_capacity(64);
    for b in digest {
        hex.push_str(&format!("{b:02x}"));
    }
    Ok(FileEntry {
        path: path.display().to_string(),
        sha256: hex,
    })
}
