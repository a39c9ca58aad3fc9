use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Everything needed to rerun a command: the argument vector, the resolved
/// configuration, derived seeds and digests of the inputs it read.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// Arguments after the program name, exactly as given.
    pub args: Vec<String>,
    pub config: serde_json::Value,
    #[serde(default)]
    pub seeds: BTreeMap<String, u64>,
    #[serde(default)]
    pub grid_fingerprint: Option<String>,
    pub library_version: String,
    #[serde(default)]
    pub input_digests: BTreeMap<String, String>,
    #[serde(default)]
    pub output_digests: BTreeMap<String, String>,
}

impl RunManifest {
    pub fn new(command: &str, args: Vec<String>, config: serde_json::Value) -> Self {
        RunManifest {
            command: command.to_string(),
            args,
            config,
            seeds: BTreeMap::new(),
            grid_fingerprint: None,
            library_version: env!("CARGO_PKG_VERSION").to_string(),
            input_digests: BTreeMap::new(),
            output_digests: BTreeMap::new(),
        }
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn record_input(&mut self, path: &Path) -> Result<()> {
        self.input_digests
            .insert(path.display().to_string(), digest_file(path)?);
        Ok(())
    }

    /// Inputs whose current digest differs from the recorded one.
    pub fn changed_inputs(&self) -> Vec<String> {
        self.input_digests
            .iter()
            .filter(|(p, d)| digest_file(Path::new(p)).ok().as_ref() != Some(*d))
            .map(|(p, _)| p.clone())
            .collect()
    }
}

pub fn digest_bytes(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn digest_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(digest_bytes(&bytes))
}
