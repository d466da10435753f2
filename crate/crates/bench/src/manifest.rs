//! Record of a command invocation, enough to run it again.

use serde::{Deserialize, Serialize};
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// Arguments after the program name, as given.
    pub argv: Vec<String>,
    /// Fully resolved configuration.
    pub config: serde_json::Value,
    pub seeds: Vec<u64>,
    pub version: String,
    pub profile: String,
    pub threads: usize,
    pub started_unix: u64,
    pub finished_unix: Option<u64>,
}

pub fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

impl RunManifest {
    pub fn new(
        command: &str,
        argv: Vec<String>,
        config: serde_json::Value,
        seeds: Vec<u64>,
    ) -> Self {
        Self {
            command: command.into(),
            argv,
            config,
            seeds,
            version: env!("CARGO_PKG_VERSION").into(),
            profile: if cfg!(debug_assertions) {
                "debug"
            } else {
                "release"
            }
            .into(),
            threads: rayon::current_num_threads(),
            started_unix: unix_now(),
            finished_unix: None,
        }
    }

    pub fn write(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        let tmp = dir.join("manifest.json.tmp");
        std::fs::write(&tmp, serde_json::to_vec_pretty(self)?)?;
        std::fs::rename(tmp, dir.join("manifest.json"))
    }

    pub fn load(path: &Path) -> std::io::Result<Self> {
        Ok(serde_json::from_slice(&std::fs::read(path)?)?)
    }
}
