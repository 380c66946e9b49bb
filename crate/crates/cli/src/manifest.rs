use std::path::Path;
use std::time::Duration;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::Failure;

/// Run record written next to the outputs. Passing it back through `--config`
/// repeats the run with the same resolved configuration.
#[derive(Debug, Serialize)]
pub struct Manifest {
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
    pub versions: Versions,
    pub config: RunConfig,
    pub outputs: Vec<String>,
    pub counts: serde_json::Map<String, serde_json::Value>,
    pub failures: Vec<String>,
    pub wall_time_s: f64,
}

#[derive(Debug, Serialize)]
pub struct Versions {
    pub growthiv_cli: &'static str,
    pub growthiv: &'static str,
}

/// SHA-256 of the canonical JSON form of the resolved configuration.
pub fn config_hash(cfg: &RunConfig) -> String {
    let json = serde_json::to_vec(cfg).expect("config serializes");
    Sha256::digest(&json).iter().map(|b| format!("{b:02x}")).collect()
}

impl Manifest {
    pub fn new(command: &str, cfg: &RunConfig) -> Self {
        Manifest {
            command: command.to_string(),
            config_hash: config_hash(cfg),
            seed: cfg.seed,
            versions: Versions { growthiv_cli: env!("CARGO_PKG_VERSION"), growthiv: growthiv::VERSION },
            config: cfg.clone(),
            outputs: Vec::new(),
            counts: serde_json::Map::new(),
            failures: Vec::new(),
            wall_time_s: 0.0,
        }
    }

    pub fn count(&mut self, key: &str, value: impl Into<serde_json::Value>) {
        self.counts.insert(key.to_string(), value.into());
    }

    /// Writes `manifest.json` into `dir` and echoes it on stdout.
    pub fn finish(mut self, dir: &Path, elapsed: Duration) -> Result<(), Failure> {
        self.wall_time_s = elapsed.as_secs_f64();
        let text = serde_json::to_string_pretty(&self).expect("manifest serializes");
        let path = dir.join("manifest.json");
        std::fs::write(&path, &text).map_err(|e| Failure { code: 1, message: format!("{}: {e}", path.display()) })?;
        println!("{text}");
        Ok(())
    }
}

