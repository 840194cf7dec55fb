use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{CliError, CliResult};

/// Record of one command invocation.
///
/// `config` is the fully resolved input (file plus command-line overrides),
/// so feeding the manifest back as `--config` reproduces the run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config: Value,
    pub seed: Option<u64>,
    pub code_version: String,
    pub outputs: Vec<PathBuf>,
    pub wall_time_s: f64,
}

/// Collects outputs while a command runs and stamps the wall time at the end.
pub struct ManifestBuilder {
    command: String,
    config: Value,
    seed: Option<u64>,
    outputs: Vec<PathBuf>,
    start: Instant,
}

impl ManifestBuilder {
    pub fn new<C: Serialize>(command: &str, config: &C, seed: Option<u64>) -> Self {
        ManifestBuilder {
            command: command.to_string(),
            config: serde_json::to_value(config).expect("configs serialise"),
            seed,
            outputs: Vec::new(),
            start: Instant::now(),
        }
    }

    pub fn output(&mut self, path: impl Into<PathBuf>) {
        self.outputs.push(path.into());
    }

    pub fn finish(self) -> RunManifest {
        RunManifest {
            command: self.command,
            config: self.config,
            seed: self.seed,
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            outputs: self.outputs,
            wall_time_s: self.start.elapsed().as_secs_f64(),
        }
    }
}

impl RunManifest {
    pub fn write(&self, path: &Path) -> CliResult<()> {
        let text = serde_json::to_string_pretty(self).expect("manifest serialises");
        std::fs::write(path, text + "\n").map_err(|e| CliError::io(path, e))
    }

    pub fn read(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }
}
