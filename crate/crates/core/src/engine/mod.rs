//! Restore sessions: lazy paging, record, and prefetch, timed against the
//! storage model.

mod concurrent;
mod params;
mod report;
mod residency;
mod session;

use thiserror::Error;

use crate::snapshot::SnapshotError;

pub use concurrent::{run_concurrent, ConcurrentRun, SessionTiming};
pub use params::{EngineParams, InstallPolicy, PrefetchPlan, PrefetchSource, RestoreMode};
pub use report::{Breakdown, Component, RestoreReport};
pub use residency::Residency;
pub use session::{finalize_record, restore, start_session, Artifacts, RestoreSession, Step};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("{0:?} mode needs a trace{1}")]
    MissingArtifacts(RestoreMode, &'static str),
    #[error("{0:?} mode does not take a recorded trace")]
    UnexpectedArtifacts(RestoreMode),
    #[error("working-set file does not belong to the supplied trace")]
    WsTraceMismatch,
    #[error("base address already calibrated")]
    AlreadyCalibrated,
    #[error("base address must be calibrated before {0}")]
    NotCalibrated(&'static str),
    #[error("calibration must precede every workload access")]
    CalibrationAfterAccess,
    #[error("page {page} outside the {num_pages}-page image")]
    OutOfBounds { page: u64, num_pages: u64 },
    #[error("session already finished its invocation")]
    Finished,
    #[error("session has not run its invocation")]
    NotFinished,
    #[error("finalize_record on a {0:?} session")]
    NotRecord(RestoreMode),
    #[error("invalid engine parameter {field}: {value}")]
    InvalidParam { field: &'static str, value: f64 },
    #[error(transparent)]
    Snapshot(#[from] SnapshotError),
}

pub type Result<T> = std::result::Result<T, EngineError>;
