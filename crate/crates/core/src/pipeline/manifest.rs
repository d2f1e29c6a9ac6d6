use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::backends::write_atomic;
use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileRecord {
    /// Relative to the run directory, except the dataset which is its file name.
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StageStatus {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub name: String,
    pub status: StageStatus,
    pub inputs: Vec<FileRecord>,
    pub outputs: Vec<FileRecord>,
    pub error: Option<String>,
    /// Unix seconds; null unless timestamps are enabled.
    pub started_at: Option<u64>,
    pub finished_at: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    /// Execution order; re-running a stage moves it to the end.
    pub stages: Vec<StageRecord>,
}

pub fn file_sha256(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

impl RunManifest {
    pub fn new(config_hash: &str) -> Self {
        RunManifest {
            config_hash: config_hash.to_string(),
            stages: Vec::new(),
        }
    }

    /// Loads the manifest of a run directory, or starts an empty one.
    pub fn load_or_new(dir: &Path, config_hash: &str) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        match fs::read(&path) {
            Ok(bytes) => {
                let m: RunManifest = serde_json::from_slice(&bytes)?;
                if m.config_hash != config_hash {
                    return Err(Error::Stale {
                        path,
                        reason: format!("manifest belongs to config {}", m.config_hash),
                    });
                }
                Ok(m)
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Self::new(config_hash)),
            Err(e) => Err(Error::io(path, e)),
        }
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let mut bytes = serde_json::to_vec_pretty(self)?;
        bytes.push(b'\n');
        write_atomic(&dir.join(MANIFEST_FILE), &bytes)
    }

    pub fn record(&mut self, stage: StageRecord) {
        self.stages.retain(|s| s.name != stage.name);
        self.stages.push(stage);
    }

    pub fn stage(&self, name: &str) -> Option<&StageRecord> {
        self.stages.iter().find(|s| s.name == name)
    }

    /// Checksum recorded for `path` by the last successful stage that wrote it.
    pub fn recorded_output(&self, path: &str) -> Option<&str> {
        self.stages
            .iter()
            .rev()
            .filter(|s| s.status == StageStatus::Ok)
            .flat_map(|s| s.outputs.iter())
            .find(|f| f.path == path)
            .map(|f| f.sha256.as_str())
    }
}
