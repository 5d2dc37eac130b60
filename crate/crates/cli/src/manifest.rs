use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::Serialize;

use crate::config::digest_hex;

#[derive(Debug, Serialize)]
pub struct FileDigest {
    pub path: PathBuf,
    pub sha256_prefix: String,
}

#[derive(Debug, Serialize)]
pub struct Versions {
    pub vipose: &'static str,
    pub checkpoint_format: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Running,
    Ok,
    Failed,
}

/// Audit record of one command invocation.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub args: Vec<String>,
    pub config_hash: Option<String>,
    /// Resolved configuration after defaults, file and flags.
    pub config: Option<serde_json::Value>,
    pub topology_hash: String,
    pub seed: Option<u64>,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<PathBuf>,
    pub versions: Versions,
    pub status: RunStatus,
    pub error: Option<String>,
    pub started_unix_ms: u128,
    pub elapsed_s: Option<f64>,
    #[serde(skip)]
    clock: Option<Instant>,
}

fn unix_ms() -> u128 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis())
}

impl RunManifest {
    pub fn new(command: &str, topology_hash: String) -> Self {
        RunManifest {
            command: command.into(),
            args: std::env::args().skip(1).collect(),
            config_hash: None,
            config: None,
            topology_hash,
            seed: None,
            inputs: Vec::new(),
            outputs: Vec::new(),
            versions: Versions {
                vipose: env!("CARGO_PKG_VERSION"),
                checkpoint_format: vipose::nn::CHECKPOINT_VERSION,
            },
            status: RunStatus::Running,
            error: None,
            started_unix_ms: unix_ms(),
            elapsed_s: None,
            clock: Some(Instant::now()),
        }
    }

    pub fn add_input(&mut self, path: &Path) -> std::io::Result<()> {
        let bytes = std::fs::read(path)?;
        self.inputs.push(FileDigest {
            path: path.to_path_buf(),
            sha256_prefix: digest_hex(&bytes),
        });
        Ok(())
    }

    pub fn finish(&mut self, error: Option<String>) {
        self.status = if error.is_some() { RunStatus::Failed } else { RunStatus::Ok };
        self.error = error;
        self.elapsed_s = self.clock.map(|c| c.elapsed().as_secs_f64());
    }

    /// Writes to a temporary sibling and renames it into place.
    pub fn write(&self, path: &Path) -> std::io::Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        let mut tmp = path.as_os_str().to_owned();
        tmp.push(".tmp");
        let tmp = PathBuf::from(tmp);
        let text = serde_json::to_string_pretty(self).map_err(std::io::Error::other)?;
        std::fs::write(&tmp, text)?;
        std::fs::rename(&tmp, path)
    }
}
