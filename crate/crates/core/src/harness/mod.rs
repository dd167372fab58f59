//! Experiment orchestration: configs, run directories with hashed artifacts,
//! per-checkpoint probe jobs, sweeps and figure-ready reports.

pub mod config;
pub mod manifest;
pub mod probe;
pub mod report;
pub mod run;
pub mod stages;

use std::path::Path;

use thiserror::Error;

use crate::estimator::EstimatorError;
use crate::model::ModelError;
use crate::probes::ProbeError;
use crate::toylang::LangError;

pub use config::{ExperimentConfig, ExperimentKind, ProbeConfig, ProbeSchedule};
pub use manifest::{Artifact, RunManifest, RunStatus};
pub use probe::{probe_checkpoint, CheckpointProbes, ProbeAssets};
pub use report::{load_probe_series, report, ProbeSeries, ReportSummary};
pub use run::{run, run_in};
pub use stages::{detect_stages, StageBoundaries};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),
    #[error("stage {stage} failed: {message}")]
    Stage { stage: String, message: String },
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("artifact error: {0}")]
    Artifact(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Lang(#[from] LangError),
    #[error(transparent)]
    Probe(#[from] ProbeError),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
}

impl HarnessError {
    pub fn io(path: &Path, e: std::io::Error) -> Self {
        HarnessError::Io { path: path.display().to_string(), message: e.to_string() }
    }

    /// 1 for configuration errors, 2 for everything that fails while running.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 1,
            _ => 2,
        }
    }

    /// Attributes an error to `stage` unless it already names one.
    pub(crate) fn in_stage(self, stage: &str) -> Self {
        match self {
            HarnessError::Config(_) | HarnessError::Stage { .. } => self,
            other => HarnessError::Stage { stage: stage.to_string(), message: other.to_string() },
        }
    }
}
