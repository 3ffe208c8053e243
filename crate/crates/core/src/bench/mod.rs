//! Experiment runners behind the `reapsnap` command line.

mod config;
mod experiments;

use std::path::PathBuf;

use thiserror::Error;

use crate::analysis::AnalysisError;
use crate::disk::DiskError;
use crate::engine::EngineError;
use crate::snapshot::SnapshotError;
use crate::workload::WorkloadError;

pub use config::{ExperimentConfig, OUT_ENV};
pub use experiments::{
    cmd_analyze, cmd_coldstart, cmd_measure_disk, cmd_opt_steps, cmd_record, cmd_snapshot_create, cmd_sweep_concurrency,
    AnalyzeOutcome, Bench, ColdstartOutcome, FileMetrics, OptStepRow, OptSteps, RecordOutcome, ReuseRow, Sweep,
    SweepPoint, OPT_STEP_NAMES,
};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("config field {field}: {msg}")]
    Config { field: String, msg: String },
    #[error("usage: {0}")]
    Usage(String),
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Snapshot(#[from] SnapshotError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Workload(#[from] WorkloadError),
    #[error(transparent)]
    Disk(#[from] DiskError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
}

impl BenchError {
    /// 1 for invalid input, 2 for failures while running.
    pub fn exit_code(&self) -> i32 {
        match self {
            BenchError::Config { .. } | BenchError::Usage(_) => 1,
            BenchError::Workload(WorkloadError::UnknownPreset(_) | WorkloadError::InvalidProfile { .. } | WorkloadError::PresetTable(_)) => 1,
            BenchError::Disk(DiskError::InvalidCalibration(_) | DiskError::Parse { .. }) => 1,
            BenchError::Engine(EngineError::InvalidParam { .. }) => 1,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, BenchError>;
