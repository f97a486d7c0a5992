//! Run manifest: a JSON record of what a command was asked to do and what
//! it produced. Written before any other side effect and finalized on
//! success, so an interrupted run leaves `complete: false` behind.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use nilm_core::{Error, Result};
use serde::{Deserialize, Serialize};

pub const MANIFEST_FILE: &str = "run_manifest.json";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub seed: u64,
    pub threads: usize,
    pub code_version: String,
    pub created_at: u64,
    pub finished_at: Option<u64>,
    pub complete: bool,
    /// Snapshot of every setting the run used.
    pub config: serde_json::Value,
    /// Paths of all artifacts the run produced, relative to the manifest.
    pub artifacts: Vec<String>,
    #[serde(skip)]
    path: PathBuf,
}

fn now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

impl RunManifest {
    /// Create the manifest in `out_dir` (created if needed) and write it
    /// immediately in its incomplete state.
    pub fn begin(
        out_dir: &Path,
        command: &str,
        seed: u64,
        threads: usize,
        config: serde_json::Value,
    ) -> Result<RunManifest> {
        std::fs::create_dir_all(out_dir)?;
        let m = RunManifest {
            command: command.to_string(),
            seed,
            threads,
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            created_at: now(),
            finished_at: None,
            complete: false,
            config,
            artifacts: Vec::new(),
            path: out_dir.join(MANIFEST_FILE),
        };
        m.write()?;
        Ok(m)
    }

    pub fn add_artifact(&mut self, name: &str) {
        self.artifacts.push(name.to_string());
    }

    /// Mark the run complete and persist the final manifest.
    pub fn finish(&mut self) -> Result<()> {
        self.finished_at = Some(now());
        self.complete = true;
        self.write()
    }

    pub fn write(&self) -> Result<()> {
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| Error::Config(format!("manifest serialization failed: {e}")))?;
        std::fs::write(&self.path, json + "\n")?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_lifecycle() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = RunManifest::begin(
            dir.path(),
            "train",
            7,
            1,
            serde_json::json!({"epochs": 3}),
        )
        .unwrap();
        let on_disk = std::fs::read_to_string(dir.path().join(MANIFEST_FILE)).unwrap();
        assert!(on_disk.contains("\"complete\": false"));

        m.add_artifact("loss.csv");
        m.finish().unwrap();
        let on_disk = std::fs::read_to_string(dir.path().join(MANIFEST_FILE)).unwrap();
        let v: serde_json::Value = serde_json::from_str(&on_disk).unwrap();
        assert_eq!(v["complete"], true);
        assert_eq!(v["artifacts"][0], "loss.csv");
        assert!(v["finished_at"].as_u64().unwrap() >= v["created_at"].as_u64().unwrap());
    }
}
