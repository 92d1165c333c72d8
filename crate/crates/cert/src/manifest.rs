use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::CliError;
use crate::io::{to_json_bytes, write_atomic};

/// Written before any computation and rewritten with the finish time.
/// Feeding it back through `--config` reproduces the same result files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config: RunConfig,
    pub config_hash: String,
    pub version: String,
    pub seed: u64,
    pub started_unix: u64,
    pub finished_unix: Option<u64>,
    pub outputs: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub axis: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schemes: Option<Vec<String>>,
}

pub fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

impl RunManifest {
    pub fn new(command: &str, config: &RunConfig, outputs: Vec<String>) -> Self {
        RunManifest {
            command: command.to_string(),
            config_hash: config.hash(),
            seed: config.seed,
            config: config.clone(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            started_unix: unix_now(),
            finished_unix: None,
            outputs,
            axis: None,
            schemes: None,
        }
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        write_atomic(path, &to_json_bytes(self))
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }
}
