//! Run manifest: what a run produced, with content hashes, status and timings.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use super::config::ExperimentKind;
use super::HarnessError;
use crate::util::{file_sha256, write_atomic};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunStatus {
    Running,
    Complete,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Artifact {
    /// Relative to the run directory.
    pub path: String,
    pub kind: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageFailure {
    pub stage: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub config_hash: String,
    pub kind: ExperimentKind,
    pub status: RunStatus,
    pub failure: Option<StageFailure>,
    /// Unix seconds.
    pub started_at: u64,
    pub finished_at: Option<u64>,
    pub timings: Vec<StageTiming>,
    pub artifacts: Vec<Artifact>,
    /// Run directories this run depends on (base run, sweep cells).
    pub dependencies: Vec<PathBuf>,
    /// Set when the manifest was returned without recomputation.
    #[serde(skip)]
    pub cached: bool,
}

pub(crate) fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

impl RunManifest {
    pub fn new(config_hash: String, kind: ExperimentKind) -> Self {
        RunManifest {
            schema_version: MANIFEST_SCHEMA_VERSION,
            config_hash,
            kind,
            status: RunStatus::Running,
            failure: None,
            started_at: unix_now(),
            finished_at: None,
            timings: Vec::new(),
            artifacts: Vec::new(),
            dependencies: Vec::new(),
            cached: false,
        }
    }

    pub fn load(dir: &Path) -> Result<Self, HarnessError> {
        let path = dir.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| HarnessError::io(&path, e))?;
        serde_json::from_str(&text).map_err(|e| HarnessError::Artifact(format!("{}: {e}", path.display())))
    }

    pub fn save(&self, dir: &Path) -> Result<(), HarnessError> {
        let path = dir.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        write_atomic(&path, text.as_bytes()).map_err(|e| HarnessError::io(&path, e))
    }

    /// Records `path` (relative to `dir`) with its current hash, replacing any
    /// earlier entry for the same path.
    pub fn record(&mut self, dir: &Path, path: &str, kind: &str) -> Result<(), HarnessError> {
        let full = dir.join(path);
        let sha256 = file_sha256(&full).map_err(|e| HarnessError::io(&full, e))?;
        self.artifacts.retain(|a| a.path != path);
        self.artifacts.push(Artifact { path: path.to_string(), kind: kind.to_string(), sha256 });
        Ok(())
    }

    pub fn artifact(&self, path: &str) -> Option<&Artifact> {
        self.artifacts.iter().find(|a| a.path == path)
    }

    pub fn artifacts_of<'a>(&'a self, kind: &'a str) -> impl Iterator<Item = &'a Artifact> + 'a {
        self.artifacts.iter().filter(move |a| a.kind == kind)
    }

    /// Every listed artifact exists with its recorded hash.
    pub fn verify(&self, dir: &Path) -> Result<(), HarnessError> {
        for a in &self.artifacts {
            let full = dir.join(&a.path);
            let got = file_sha256(&full).map_err(|e| HarnessError::io(&full, e))?;
            if got != a.sha256 {
                return Err(HarnessError::Artifact(format!("{} changed since it was recorded", a.path)));
            }
        }
        Ok(())
    }

    pub fn timing(&mut self, stage: &str, seconds: f64) {
        self.timings.push(StageTiming { stage: stage.to_string(), seconds });
    }
}
