use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use spindoe::config::Config;

use super::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

/// Files read and written by one run.
#[derive(Debug, Default)]
pub struct Recorder {
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
}

fn hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn digest_file(path: &Path) -> CliResult<String> {
    let bytes = std::fs::read(path)
        .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
    Ok(hex(&bytes))
}

impl Recorder {
    pub fn read(&mut self, path: &Path) -> CliResult<String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
        self.inputs.push(FileDigest {
            path: path.display().to_string(),
            sha256: hex(text.as_bytes()),
        });
        Ok(text)
    }

    pub fn write(&mut self, path: &Path, bytes: &[u8]) -> CliResult<()> {
        std::fs::write(path, bytes)
            .map_err(|e| CliError::Internal(format!("writing {}: {e}", path.display())))?;
        self.outputs.push(FileDigest {
            path: path.display().to_string(),
            sha256: hex(bytes),
        });
        Ok(())
    }
}

pub fn default_path(primary: &Path) -> PathBuf {
    let mut s = primary.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub subcommand: String,
    /// Command line without the program name.
    pub args: Vec<String>,
    pub cwd: Option<String>,
    pub seed: u64,
    /// Parameters in effect, so a rerun does not depend on the config file.
    pub config: Config,
    pub config_path: Option<String>,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub duration_s: f64,
}

impl RunManifest {
    pub fn new(
        subcommand: String,
        args: Vec<String>,
        seed: u64,
        config: Config,
        config_path: Option<String>,
        rec: Recorder,
        duration_s: f64,
    ) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            subcommand,
            args,
            cwd: std::env::current_dir().ok().map(|p| p.display().to_string()),
            seed,
            config,
            config_path,
            inputs: rec.inputs,
            outputs: rec.outputs,
            duration_s,
        }
    }

    pub fn write(&self, path: &Path) -> CliResult<()> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(path, text + "\n")
            .map_err(|e| CliError::Internal(format!("writing {}: {e}", path.display())))
    }

    pub fn read(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
    }
}
