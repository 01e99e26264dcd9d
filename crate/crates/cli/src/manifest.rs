use std::path::Path;

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Clone, Serialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

/// Provenance attached to every output.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config: Value,
    pub seed: u64,
    pub version: String,
    pub inputs: Vec<InputDigest>,
    pub timestamp: String,
}

impl RunManifest {
    pub fn new<C: Serialize>(command: &str, config: &C, seed: u64, inputs: &[&Path]) -> Result<Self, CliError> {
        let inputs = inputs.iter().map(|p| digest(p)).collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            command: command.to_string(),
            config: serde_json::to_value(config).map_err(|e| CliError::Usage(e.to_string()))?,
            seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
            inputs,
            timestamp: chrono::Utc::now().to_rfc3339(),
        })
    }
}

fn digest(path: &Path) -> Result<InputDigest, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    Ok(InputDigest { path: path.display().to_string(), sha256: hex::encode(Sha256::digest(&bytes)) })
}
