use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const RUN_MANIFEST_FILE: &str = "run_manifest.json";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn hash_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Artifact {
    /// Relative to the output directory, `/`-separated.
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub seed: u64,
    pub wall_clock_s: f64,
    pub artifacts: Vec<Artifact>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub table_sha256: String,
    pub mission_sha256: String,
    pub prearm_sha256: String,
    pub stages: BTreeMap<String, StageRecord>,
}

impl RunManifest {
    pub fn new(table_sha256: String, mission_sha256: String, prearm_sha256: String) -> Self {
        Self {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            table_sha256,
            mission_sha256,
            prearm_sha256,
            stages: BTreeMap::new(),
        }
    }

    pub fn load(dir: &Path) -> Result<Option<Self>> {
        let path = dir.join(RUN_MANIFEST_FILE);
        if !path.exists() {
            return Ok(None);
        }
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Ok(Some(serde_json::from_str(&text)?))
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let path = dir.join(RUN_MANIFEST_FILE);
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }

    /// Hashes `files` (relative paths) and records them under `stage`.
    /// Later stages are dropped: their inputs have changed.
    pub fn record(&mut self, dir: &Path, stage: &str, seed: u64, wall_clock_s: f64, files: &[PathBuf]) -> Result<()> {
        let mut artifacts = Vec::with_capacity(files.len());
        for rel in files {
            artifacts.push(Artifact {
                path: rel.to_string_lossy().replace('\\', "/"),
                sha256: hash_file(&dir.join(rel))?,
            });
        }
        if let Some(pos) = super::STAGES.iter().position(|s| *s == stage) {
            for later in &super::STAGES[pos + 1..] {
                self.stages.remove(*later);
            }
        }
        self.stages.insert(
            stage.to_string(),
            StageRecord {
                seed,
                wall_clock_s,
                artifacts,
            },
        );
        Ok(())
    }

    /// Every artifact of `stage` must exist and match its hash.
    pub fn verify(&self, dir: &Path, stage: &str) -> Result<()> {
        let Some(rec) = self.stages.get(stage) else {
            return Ok(());
        };
        for a in &rec.artifacts {
            let path = dir.join(&a.path);
            if !path.exists() || hash_file(&path)? != a.sha256 {
                return Err(Error::HashMismatch { path });
            }
        }
        Ok(())
    }
}
