//! Characterization metrics over traces and restore reports.

mod metrics;
mod summary;

use thiserror::Error;

pub use metrics::{contiguity_of_pages, contiguity_stats, footprint, footprint_mb, reuse_of_pages, reuse_stats, ContiguityStats, ReuseStats};
pub use summary::{
    render_results_csv, render_speedup_csv, speedup_report, write_results_csv, ResultRow, SpeedupRow, SpeedupSummary,
};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("page size mismatch: {a} vs {b}")]
    PageSizeMismatch { a: u32, b: u32 },
    #[error("{function}: {msg}")]
    Unpaired { function: String, msg: String },
    #[error("no reports to summarize")]
    Empty,
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("i/o error on {path}: {source}")]
    Io { path: std::path::PathBuf, source: std::io::Error },
}
