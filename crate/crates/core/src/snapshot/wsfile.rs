use std::alloc::{self, Layout};
use std::fs::{self, OpenOptions};
use std::io::Read;
use std::path::Path;

use super::error::{IoContext, Result, SnapshotError};
use super::{check_page_size, PageTrace, SnapshotImage, FORMAT_VERSION};

pub const WS_MAGIC: [u8; 4] = *b"RPWS";
pub const WS_HEADER_LEN: usize = 20;

/// Compact copy of the traced pages, page `i` being the guest page at
/// `trace.offsets()[i]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WorkingSetFile {
    trace: PageTrace,
    pages: Vec<u8>,
}

/// Outcome of checking a working-set file against its image and trace.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum WsValidation {
    Valid,
    Mismatch { first_index: usize },
    Structural { expected_len: u64, found_len: u64 },
}

impl WsValidation {
    pub fn is_ok(&self) -> bool {
        matches!(self, WsValidation::Valid)
    }

    pub fn first_mismatch_index(&self) -> Option<usize> {
        match self {
            WsValidation::Mismatch { first_index } => Some(*first_index),
            _ => None,
        }
    }
}

/// Payload starts at the first page boundary after the header.
fn payload_offset(page_size: u32) -> usize {
    WS_HEADER_LEN.div_ceil(page_size as usize) * page_size as usize
}

struct Header {
    page_size: u32,
    count: u64,
}

fn parse_header(bytes: &[u8]) -> Result<Header> {
    if bytes.len() < WS_HEADER_LEN {
        return Err(SnapshotError::Truncated { expected: WS_HEADER_LEN as u64, found: bytes.len() as u64 });
    }
    let magic: [u8; 4] = bytes[0..4].try_into().unwrap();
    if magic != WS_MAGIC {
        return Err(SnapshotError::BadMagic { expected: WS_MAGIC, found: magic });
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
    Ok(Header { page_size, count })
}

/// Structural checks shared by buffered and direct reads; returns the
/// payload range.
fn check_layout(bytes: &[u8], header: &Header) -> Result<std::ops::Range<usize>> {
    let start = payload_offset(header.page_size);
    let found = bytes.len() as u64;
    let expected = header
        .count
        .checked_mul(header.page_size as u64)
        .and_then(|n| n.checked_add(start as u64))
        .unwrap_or(u64::MAX);
    if found < expected {
        return Err(SnapshotError::Truncated { expected, found });
    }
    if found > expected {
        return Err(SnapshotError::Trailing(found - expected));
    }
    if let Some(pos) = bytes[WS_HEADER_LEN..start].iter().position(|&b| b != 0) {
        return Err(SnapshotError::Padding(WS_HEADER_LEN + pos));
    }
    Ok(start..bytes.len())
}

impl WorkingSetFile {
    /// Pairs a trace with raw page bytes without checking consistency; see
    /// [`validate_working_set`].
    pub fn from_parts(trace: PageTrace, pages: Vec<u8>) -> Self {
        WorkingSetFile { trace, pages }
    }

    pub fn trace(&self) -> &PageTrace {
        &self.trace
    }

    pub fn pages(&self) -> &[u8] {
        &self.pages
    }

    pub fn pages_mut(&mut self) -> &mut Vec<u8> {
        &mut self.pages
    }

    pub fn page_size(&self) -> u32 {
        self.trace.page_size()
    }

    pub fn page_count(&self) -> usize {
        self.pages.len() / self.page_size() as usize
    }

    pub fn page(&self, index: usize) -> &[u8] {
        let ps = self.page_size() as usize;
        &self.pages[index * ps..(index + 1) * ps]
    }

    /// Size of the payload in bytes.
    pub fn payload_len(&self) -> u64 {
        self.pages.len() as u64
    }

    /// Size of the whole file in bytes.
    pub fn file_len(&self) -> u64 {
        payload_offset(self.page_size()) as u64 + self.payload_len()
    }

    pub fn encode(&self) -> Vec<u8> {
        let start = payload_offset(self.page_size());
        let mut out = Vec::with_capacity(start + self.pages.len());
        out.extend_from_slice(&WS_MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&0u16.to_le_bytes());
        out.extend_from_slice(&self.page_size().to_le_bytes());
        out.extend_from_slice(&(self.page_count() as u64).to_le_bytes());
        out.resize(start, 0);
        out.extend_from_slice(&self.pages);
        out
    }

    /// Decodes a file image and pairs it with `trace`; the header must agree
    /// with the trace's page size and length.
    pub fn decode(bytes: &[u8], trace: PageTrace) -> Result<Self> {
        let header = parse_header(bytes)?;
        let payload = check_layout(bytes, &header)?;
        Self::pair(header, bytes[payload].to_vec(), trace)
    }

    fn pair(header: Header, pages: Vec<u8>, trace: PageTrace) -> Result<Self> {
        if header.page_size != trace.page_size() {
            return Err(SnapshotError::PageSizeMismatch { expected: trace.page_size(), found: header.page_size });
        }
        if header.count != trace.len() as u64 {
            return Err(SnapshotError::Truncated {
                expected: trace.footprint_bytes(),
                found: header.count * header.page_size as u64,
            });
        }
        Ok(WorkingSetFile { trace, pages })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.encode()).at(path)
    }

    pub fn read(path: impl AsRef<Path>, trace: PageTrace) -> Result<Self> {
        let path = path.as_ref();
        Self::decode(&fs::read(path).at(path)?, trace)
    }

    /// Reads the file bypassing the host page cache, in a single request.
    pub fn read_direct(path: impl AsRef<Path>, trace: PageTrace) -> Result<Self> {
        let path = path.as_ref();
        let buf = read_ws_payload_direct(path)?;
        let header = parse_header(&buf)?;
        let payload = check_layout(&buf, &header)?;
        Self::pair(header, buf[payload].to_vec(), trace)
    }
}

/// Page-aligned heap buffer for cache-bypass reads.
pub(crate) struct AlignedBuf {
    ptr: *mut u8,
    layout: Layout,
    len: usize,
}

impl AlignedBuf {
    pub(crate) fn zeroed(len: usize, align: usize) -> Self {
        let layout = Layout::from_size_align(len.max(align), align).expect("valid layout");
        // SAFETY: layout has non-zero size.
        let ptr = unsafe { alloc::alloc_zeroed(layout) };
        if ptr.is_null() {
            alloc::handle_alloc_error(layout);
        }
        AlignedBuf { ptr, layout, len }
    }
}

impl std::ops::Deref for AlignedBuf {
    type Target = [u8];
    fn deref(&self) -> &[u8] {
        // SAFETY: ptr is valid for layout.size() >= len bytes.
        unsafe { std::slice::from_raw_parts(self.ptr, self.len) }
    }
}

impl std::ops::DerefMut for AlignedBuf {
    fn deref_mut(&mut self) -> &mut [u8] {
        // SAFETY: as above, and we hold the only reference.
        unsafe { std::slice::from_raw_parts_mut(self.ptr, self.len) }
    }
}

impl Drop for AlignedBuf {
    fn drop(&mut self) {
        // SAFETY: allocated with this layout in `zeroed`.
        unsafe { alloc::dealloc(self.ptr, self.layout) }
    }
}

pub(crate) const DIRECT_ALIGN: usize = 4096;

pub(crate) fn direct_unsupported(path: &Path, err: &std::io::Error) -> bool {
    let _ = path;
    err.raw_os_error() == Some(libc::EINVAL)
}

/// Reads an entire working-set file with `O_DIRECT`. Filesystems that do not
/// support cache-bypass reads yield [`SnapshotError::BypassUnsupported`].
pub fn read_ws_payload_direct(path: impl AsRef<Path>) -> Result<Vec<u8>> {
    let path = path.as_ref();
    let buf = read_direct_raw(path)?;
    Ok(buf.to_vec())
}

pub(crate) fn read_direct_raw(path: &Path) -> Result<AlignedBuf> {
    use std::os::unix::fs::OpenOptionsExt;

    let unsupported = |reason: String| SnapshotError::BypassUnsupported { path: path.to_path_buf(), reason };
    if !cfg!(target_os = "linux") {
        return Err(unsupported("O_DIRECT is only wired up on Linux".into()));
    }
    let mut file = match OpenOptions::new().read(true).custom_flags(libc::O_DIRECT).open(path) {
        Ok(f) => f,
        Err(e) if direct_unsupported(path, &e) => return Err(unsupported(e.to_string())),
        Err(e) => return Err(e).at(path),
    };
    let len = file.metadata().at(path)?.len() as usize;
    let padded = len.div_ceil(DIRECT_ALIGN) * DIRECT_ALIGN;
    let mut buf = AlignedBuf::zeroed(padded, DIRECT_ALIGN);
    let mut filled = 0;
    while filled < len {
        match file.read(&mut buf[filled..]) {
            Ok(0) => break,
            Ok(n) => filled += n,
            Err(e) if direct_unsupported(path, &e) => return Err(unsupported(e.to_string())),
            Err(e) => return Err(e).at(path),
        }
    }
    buf.len = filled.min(len);
    Ok(buf)
}

/// Copies the traced pages out of `image`, in trace order.
pub fn build_working_set(image: &SnapshotImage, trace: &PageTrace) -> Result<WorkingSetFile> {
    if let Some(id) = trace.image_id() {
        if id != image.id() {
            return Err(SnapshotError::ImageMismatch { trace: id, image: image.id() });
        }
    }
    trace.check_against(image)?;
    image.verify()?;
    let ps = image.page_size() as usize;
    let mut pages = vec![0u8; trace.len() * ps];
    for (chunk, page) in pages.chunks_exact_mut(ps).zip(trace.page_indices()) {
        image.read_page_into(page, chunk)?;
    }
    Ok(WorkingSetFile { trace: trace.clone().with_image_id(image.id()), pages })
}

/// Byte-compares every working-set page with its source page in `image`.
pub fn validate_working_set(image: &SnapshotImage, trace: &PageTrace, ws: &WorkingSetFile) -> Result<WsValidation> {
    trace.check_against(image)?;
    let expected_len = trace.footprint_bytes();
    let found_len = ws.payload_len();
    if ws.page_size() != trace.page_size() || expected_len != found_len {
        return Ok(WsValidation::Structural { expected_len, found_len });
    }
    let ps = image.page_size() as usize;
    let mut source = vec![0u8; ps];
    for (index, page) in trace.page_indices().enumerate() {
        image.read_page_into(page, &mut source)?;
        if ws.pages[index * ps..(index + 1) * ps] != source[..] {
            return Ok(WsValidation::Mismatch { first_index: index });
        }
    }
    Ok(WsValidation::Valid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::snapshot::{create_synthetic_image, regenerate};

    #[test]
    fn build_concatenates_pages_in_trace_order() {
        let dir = tempfile::tempdir().unwrap();
        let image = create_synthetic_image(dir.path(), 16, 4096, 42, 0).unwrap();
        let trace = PageTrace::new(4096, vec![0, 8192]).unwrap();
        let ws = build_working_set(&image, &trace).unwrap();
        let mut expected = regenerate(42, 0, 4096);
        expected.extend(regenerate(42, 2, 4096));
        assert_eq!(ws.pages(), &expected[..]);
        assert_eq!(ws.file_len(), 3 * 4096);
        assert!(validate_working_set(&image, &trace, &ws).unwrap().is_ok());
    }

    #[test]
    fn empty_trace_gives_empty_payload() {
        let dir = tempfile::tempdir().unwrap();
        let image = create_synthetic_image(dir.path(), 4, 4096, 1, 0).unwrap();
        let ws = build_working_set(&image, &PageTrace::empty(4096).unwrap()).unwrap();
        assert_eq!(ws.payload_len(), 0);
        assert_eq!(ws.encode().len(), 4096);
    }

    #[test]
    fn validation_reports() {
        let dir = tempfile::tempdir().unwrap();
        let image = create_synthetic_image(dir.path(), 8, 512, 3, 0).unwrap();
        let trace = PageTrace::from_pages(512, [5, 1, 7]).unwrap();
        let ws = build_working_set(&image, &trace).unwrap();

        let mut flipped = ws.clone();
        flipped.pages_mut()[512 + 77] ^= 0x40;
        assert_eq!(
            validate_working_set(&image, &trace, &flipped).unwrap(),
            WsValidation::Mismatch { first_index: 1 }
        );

        let mut short = ws.clone();
        short.pages_mut().truncate(1024);
        assert_eq!(
            validate_working_set(&image, &trace, &short).unwrap(),
            WsValidation::Structural { expected_len: 1536, found_len: 1024 }
        );
    }

    #[test]
    fn out_of_bounds_trace() {
        let dir = tempfile::tempdir().unwrap();
        let image = create_synthetic_image(dir.path(), 4, 512, 3, 0).unwrap();
        let trace = PageTrace::from_pages(512, [4]).unwrap();
        assert!(matches!(build_working_set(&image, &trace), Err(SnapshotError::OutOfBounds { .. })));
    }

    #[test]
    fn file_round_trip_and_header_checks() {
        let dir = tempfile::tempdir().unwrap();
        let image = create_synthetic_image(dir.path().join("img"), 8, 512, 3, 0).unwrap();
        let trace = PageTrace::from_pages(512, [2, 3]).unwrap();
        let ws = build_working_set(&image, &trace).unwrap();
        let path = dir.path().join("ws.bin");
        ws.write(&path).unwrap();
        let back = WorkingSetFile::read(&path, trace.clone()).unwrap();
        assert_eq!(back.pages(), ws.pages());

        let bytes = ws.encode();
        let mut bad = bytes.clone();
        bad[100] = 1;
        assert!(matches!(WorkingSetFile::decode(&bad, trace.clone()), Err(SnapshotError::Padding(100))));
        let other = PageTrace::from_pages(512, [2]).unwrap();
        assert!(WorkingSetFile::decode(&bytes, other).is_err());
    }

    #[test]
    fn direct_read_matches_or_reports_unsupported() {
        let dir = tempfile::tempdir().unwrap();
        let image = create_synthetic_image(dir.path().join("img"), 8, 4096, 3, 0).unwrap();
        let trace = PageTrace::from_pages(4096, [6, 0, 1]).unwrap();
        let ws = build_working_set(&image, &trace).unwrap();
        let path = dir.path().join("ws.bin");
        ws.write(&path).unwrap();
        match WorkingSetFile::read_direct(&path, trace) {
            Ok(back) => assert_eq!(back.pages(), ws.pages()),
            Err(SnapshotError::BypassUnsupported { .. }) => {}
            Err(e) => panic!("unexpected error {e}"),
        }
    }
}
