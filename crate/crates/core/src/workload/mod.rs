//! Synthetic function workloads: profiles, stable page layouts, and
//! per-invocation access sequences.

mod import;
mod invocation;
mod layout;
mod presets;
mod profile;
mod sequence;

use std::io;
use std::path::PathBuf;

use thiserror::Error;

use crate::snapshot::SnapshotError;

pub use import::import_trace;
pub use invocation::{derive_invocation, unique_pages_for};
pub use layout::{synthesize_layout, Layout, Run};
pub use presets::{preset, presets, PresetTable, BUILTIN_PRESETS};
pub use profile::FunctionProfile;
pub use sequence::{Access, AccessKind, AccessSequence, Phase};

#[derive(Debug, Error)]
pub enum WorkloadError {
    #[error("invalid profile {name}: {msg}")]
    InvalidProfile { name: String, msg: String },
    #[error("{stable} stable pages in {runs} runs do not fit in {available} usable pages")]
    LayoutDoesNotFit { stable: u64, runs: u64, available: u64 },
    #[error("need {need} fresh pages outside the stable set, only {have} available")]
    NotEnoughFreePages { need: u64, have: u64 },
    #[error("layout was synthesized for a different profile ({0})")]
    LayoutMismatch(String),
    #[error("unknown preset {0:?}")]
    UnknownPreset(String),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("preset table: {0}")]
    PresetTable(String),
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error(transparent)]
    Snapshot(#[from] SnapshotError),
}
