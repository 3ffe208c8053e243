//! Storage performance model: calibrated throughput table, a shared
//! processor-sharing scheduler for concurrent sessions, and an optional
//! harness that measures a real device.

mod calibration;
mod measure;
mod model;
mod shared;

use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub use measure::{measure_real, AccessPattern};
pub use model::{CalibrationPoint, FaultPath, ReadClass, StorageModel, MIB};
pub use shared::{shared_schedule, Completion, DiskRequest, RequestId, SharedDisk};

#[derive(Debug, Error)]
pub enum DiskError {
    #[error("invalid calibration: {0}")]
    InvalidCalibration(String),
    #[error("calibration line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path} is {size} bytes; measurement needs at least {min}")]
    TooSmall { path: PathBuf, size: u64, min: u64 },
    #[error("unsupported: {0}")]
    Unsupported(String),
}
