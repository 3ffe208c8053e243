//! On-disk snapshot artifacts: the guest-memory image, the trace file of
//! first-touched page offsets, and the compacted working-set file.

mod content;
mod error;
mod image;
mod trace;
mod wsfile;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use content::{fill_page, mix64, page_word, regenerate};
pub use error::{Result, SnapshotError};
pub use image::{create_synthetic_image, ImageMeta, SnapshotImage, GUEST_MEM_FILE, META_FILE, VMM_STATE_FILE};
pub use trace::{PageTrace, TRACE_HEADER_LEN, TRACE_MAGIC};
pub(crate) use wsfile::{AlignedBuf, DIRECT_ALIGN};
pub use wsfile::{
    build_working_set, read_ws_payload_direct, validate_working_set, WorkingSetFile, WsValidation,
    WS_HEADER_LEN, WS_MAGIC,
};

pub const FORMAT_VERSION: u16 = 1;
pub const DEFAULT_PAGE_SIZE: u32 = 4096;
pub const MIN_PAGE_SIZE: u32 = 512;

/// Identity of a guest image; two images with the same id hold identical
/// guest memory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ImageId(pub u64);

impl fmt::Display for ImageId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:016x}", self.0)
    }
}

pub(crate) fn check_page_size(page_size: u32) -> Result<()> {
    if page_size < MIN_PAGE_SIZE || !page_size.is_power_of_two() {
        return Err(SnapshotError::PageSize(page_size));
    }
    Ok(())
}
