use std::collections::HashSet;
use std::fs;
use std::path::Path;

use super::error::{IoContext, Result, SnapshotError};
use super::{check_page_size, ImageId, SnapshotImage, FORMAT_VERSION};

pub const TRACE_MAGIC: [u8; 4] = *b"RPTR";
pub const TRACE_HEADER_LEN: usize = 20;

/// Ordered, duplicate-free byte offsets of first-touched guest pages, in
/// fault order.
///
/// The file form carries no image identity; `image_id` is set when the
/// trace is produced by a record session or explicitly bound to an image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PageTrace {
    page_size: u32,
    image_id: Option<ImageId>,
    offsets: Vec<u64>,
}

impl PageTrace {
    pub fn new(page_size: u32, offsets: Vec<u64>) -> Result<Self> {
        check_page_size(page_size)?;
        let mut seen = HashSet::with_capacity(offsets.len());
        for &offset in &offsets {
            if offset % page_size as u64 != 0 {
                return Err(SnapshotError::Misaligned { offset, page_size });
            }
            if !seen.insert(offset) {
                return Err(SnapshotError::Duplicate(offset));
            }
        }
        Ok(PageTrace { page_size, image_id: None, offsets })
    }

    pub fn empty(page_size: u32) -> Result<Self> {
        Self::new(page_size, Vec::new())
    }

    pub fn from_pages(page_size: u32, pages: impl IntoIterator<Item = u64>) -> Result<Self> {
        let offsets = pages
            .into_iter()
            .map(|p| {
                p.checked_mul(page_size as u64).ok_or(SnapshotError::OutOfBounds { offset: u64::MAX, size: u64::MAX })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(page_size, offsets)
    }

    /// Checks bounds and page size against `image` and tags the trace with
    /// its id.
    pub fn bind(mut self, image: &SnapshotImage) -> Result<Self> {
        if let Some(id) = self.image_id {
            if id != image.id() {
                return Err(SnapshotError::ImageMismatch { trace: id, image: image.id() });
            }
        }
        self.check_against(image)?;
        self.image_id = Some(image.id());
        Ok(self)
    }

    pub(crate) fn with_image_id(mut self, id: ImageId) -> Self {
        self.image_id = Some(id);
        self
    }

    pub(crate) fn check_against(&self, image: &SnapshotImage) -> Result<()> {
        if self.page_size != image.page_size() {
            return Err(SnapshotError::PageSizeMismatch { expected: image.page_size(), found: self.page_size });
        }
        let size = image.mem_len();
        if let Some(&offset) = self.offsets.iter().find(|&&o| o >= size) {
            return Err(SnapshotError::OutOfBounds { offset, size });
        }
        Ok(())
    }

    pub fn page_size(&self) -> u32 {
        self.page_size
    }

    pub fn image_id(&self) -> Option<ImageId> {
        self.image_id
    }

    pub fn offsets(&self) -> &[u64] {
        &self.offsets
    }

    pub fn page_indices(&self) -> impl Iterator<Item = u64> + '_ {
        self.offsets.iter().map(move |o| o / self.page_size as u64)
    }

    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }

    /// Bytes a working-set file for this trace occupies (payload only).
    pub fn footprint_bytes(&self) -> u64 {
        self.offsets.len() as u64 * self.page_size as u64
    }

    /// Number of maximal runs of adjacent pages, i.e. the number of
    /// contiguous regions a bulk install needs.
    pub fn regions(&self) -> usize {
        let mut pages: Vec<u64> = self.page_indices().collect();
        pages.sort_unstable();
        pages.windows(2).filter(|w| w[1] != w[0] + 1).count() + usize::from(!pages.is_empty())
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(TRACE_HEADER_LEN + self.offsets.len() * 8);
        out.extend_from_slice(&TRACE_MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&0u16.to_le_bytes());
        out.extend_from_slice(&self.page_size.to_le_bytes());
        out.extend_from_slice(&(self.offsets.len() as u64).to_le_bytes());
        for offset in &self.offsets {
            out.extend_from_slice(&offset.to_le_bytes());
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < TRACE_HEADER_LEN {
            return Err(SnapshotError::Truncated { expected: TRACE_HEADER_LEN as u64, found: bytes.len() as u64 });
        }
        let magic: [u8; 4] = bytes[0..4].try_into().unwrap();
        if magic != TRACE_MAGIC {
            return Err(SnapshotError::BadMagic { expected: TRACE_MAGIC, found: magic });
        }
        let version = u16::from_le_bytes(bytes[4..6].try_into().unwrap());
        if version != FORMAT_VERSION {
            return Err(SnapshotError::Version(version));
        }
        let reserved = u16::from_le_bytes(bytes[6..8].try_into().unwrap());
        if reserved != 0 {
            return Err(SnapshotError::Reserved(reserved));
        }
        let page_size = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        check_page_size(page_size)?;
        let count = u64::from_le_bytes(bytes[12..20].try_into().unwrap());
        let found = bytes.len() as u64;
        let expected = count
            .checked_mul(8)
            .and_then(|n| n.checked_add(TRACE_HEADER_LEN as u64))
            .unwrap_or(u64::MAX);
        if found < expected {
            return Err(SnapshotError::Truncated { expected, found });
        }
        if found > expected {
            return Err(SnapshotError::Trailing(found - expected));
        }
        let offsets = bytes[TRACE_HEADER_LEN..]
            .chunks_exact(8)
            .map(|c| u64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Self::new(page_size, offsets)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.encode()).at(path)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::decode(&fs::read(path).at(path)?)
    }

    /// Reads a trace that must have been recorded with `page_size` pages.
    pub fn read_expecting(path: impl AsRef<Path>, page_size: u32) -> Result<Self> {
        let trace = Self::read(path)?;
        if trace.page_size != page_size {
            return Err(SnapshotError::PageSizeMismatch { expected: page_size, found: trace.page_size });
        }
        Ok(trace)
    }
}
