use std::fs;
use std::path::Path;

use super::{AccessSequence, WorkloadError};
use crate::snapshot::{PageTrace, TRACE_MAGIC};

/// Loads a fault log as an access sequence. Binary trace files become
/// body-phase reads in first-touch order; anything else is parsed as
/// sequence text.
pub fn import_trace(path: impl AsRef<Path>, page_size: u32) -> Result<AccessSequence, WorkloadError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|source| WorkloadError::Io { path: path.to_path_buf(), source })?;
    if bytes.starts_with(&TRACE_MAGIC) {
        let trace = PageTrace::decode(&bytes)?;
        if trace.page_size() != page_size {
            return Err(crate::snapshot::SnapshotError::PageSizeMismatch { expected: page_size, found: trace.page_size() }.into());
        }
        return Ok(AccessSequence::body_reads(trace.page_indices(), 0));
    }
    let text = String::from_utf8(bytes).map_err(|_| WorkloadError::Parse { line: 1, msg: "neither a trace file nor UTF-8 text".into() })?;
    AccessSequence::parse(&text)
}
