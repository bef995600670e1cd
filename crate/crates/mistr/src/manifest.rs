//! Run manifests: one `manifest.json` per output directory.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub format_version: u32,
    pub command: String,
    pub library_version: String,
    pub seed: u64,
    pub config: BTreeMap<String, String>,
    pub inputs: Vec<FileDigest>,
    /// Files written next to the manifest, relative to its directory.
    pub outputs: Vec<FileDigest>,
    pub wall_clock_seconds: f64,
    pub diagnostics: serde_json::Value,
}

impl RunManifest {
    pub fn new(command: &str, seed: u64, config: BTreeMap<String, String>) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            command: command.to_owned(),
            library_version: env!("CARGO_PKG_VERSION").to_owned(),
            seed,
            config,
            inputs: Vec::new(),
            outputs: Vec::new(),
            wall_clock_seconds: 0.0,
            diagnostics: serde_json::Value::Null,
        }
    }

    pub fn add_input(&mut self, path: &Path) -> Result<(), CliError> {
        self.inputs.push(FileDigest { path: path.display().to_string(), sha256: digest_file(path)? });
        Ok(())
    }

    /// Digests the given outputs of `dir` and writes the manifest there.
    pub fn write(mut self, dir: &Path, outputs: &[String]) -> Result<(), CliError> {
        self.outputs = outputs
            .iter()
            .map(|rel| Ok(FileDigest { path: rel.clone(), sha256: digest_file(&dir.join(rel))? }))
            .collect::<Result<_, CliError>>()?;
        write_json(&dir.join(MANIFEST_FILE), &self)
    }

    pub fn read(dir: &Path) -> Result<Self, CliError> {
        let m: Self = read_json(&dir.join(MANIFEST_FILE))?;
        if m.format_version != FORMAT_VERSION {
            return Err(CliError::Validation(format!(
                "{}: unsupported format version {} (expected {FORMAT_VERSION})",
                dir.display(),
                m.format_version
            )));
        }
        Ok(m)
    }

    /// Recomputes every output digest.
    pub fn verify(&self, dir: &Path) -> Result<(), CliError> {
        for f in &self.outputs {
            let d = digest_file(&dir.join(&f.path))?;
            if d != f.sha256 {
                return Err(CliError::Validation(format!(
                    "{}: digest mismatch for {}, the artifact was modified",
                    dir.display(),
                    f.path
                )));
            }
        }
        Ok(())
    }
}

pub fn digest_file(path: &Path) -> Result<String, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::io(path, e))?;
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}
