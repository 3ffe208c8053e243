use std::io;
use std::path::PathBuf;

use thiserror::Error;

use super::ImageId;

#[derive(Debug, Error)]
pub enum SnapshotError {
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("invalid image geometry: {0}")]
    Geometry(String),
    #[error("bad magic {found:?}, expected {expected:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },
    #[error("unsupported format version {0}")]
    Version(u16),
    #[error("reserved header field is {0:#06x}, expected 0")]
    Reserved(u16),
    #[error("invalid page size {0}")]
    PageSize(u32),
    #[error("page size {found} does not match expected {expected}")]
    PageSizeMismatch { expected: u32, found: u32 },
    #[error("offset {offset:#x} is not a multiple of page size {page_size}")]
    Misaligned { offset: u64, page_size: u32 },
    #[error("duplicate offset {0:#x}")]
    Duplicate(u64),
    #[error("file truncated: expected {expected} bytes, found {found}")]
    Truncated { expected: u64, found: u64 },
    #[error("{0} trailing bytes after payload")]
    Trailing(u64),
    #[error("non-zero header padding at byte {0}")]
    Padding(usize),
    #[error("offset {offset:#x} out of bounds for image of {size} bytes")]
    OutOfBounds { offset: u64, size: u64 },
    #[error("trace belongs to image {trace} but image is {image}")]
    ImageMismatch { trace: ImageId, image: ImageId },
    #[error("image checksum mismatch: recorded {recorded:016x}, computed {computed:016x}")]
    Checksum { recorded: u64, computed: u64 },
    #[error("malformed meta file: {0}")]
    Meta(String),
    #[error("cache-bypass read unsupported on {path}: {reason}")]
    BypassUnsupported { path: PathBuf, reason: String },
}

pub type Result<T> = std::result::Result<T, SnapshotError>;

pub(crate) trait IoContext<T> {
    fn at(self, path: &std::path::Path) -> Result<T>;
}

impl<T> IoContext<T> for io::Result<T> {
    fn at(self, path: &std::path::Path) -> Result<T> {
        self.map_err(|source| SnapshotError::Io { path: path.to_path_buf(), source })
    }
}
