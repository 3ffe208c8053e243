use std::fs::{self, File};
use std::io::{BufWriter, Read, Write};
use std::os::unix::fs::FileExt;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use xxhash_rust::xxh3::Xxh3;

use super::content::{fill_page, fill_vmm_state};
use super::error::{IoContext, Result, SnapshotError};
use super::{check_page_size, ImageId};

pub const GUEST_MEM_FILE: &str = "guest_mem.bin";
pub const VMM_STATE_FILE: &str = "vmm_state.bin";
pub const META_FILE: &str = "meta";

/// Contents of the textual `meta` file of a snapshot directory.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ImageMeta {
    pub page_size: u32,
    pub num_pages: u64,
    pub content_seed: u64,
    pub checksum: u64,
}

impl ImageMeta {
    fn render(&self) -> String {
        format!(
            "page_size={}\nnum_pages={}\ncontent_seed={}\nchecksum={:016x}\n",
            self.page_size, self.num_pages, self.content_seed, self.checksum
        )
    }

    fn parse(text: &str) -> Result<Self> {
        let mut page_size = None;
        let mut num_pages = None;
        let mut content_seed = None;
        let mut checksum = None;
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| SnapshotError::Meta(format!("expected key=value, got {line:?}")))?;
            let bad = |_| SnapshotError::Meta(format!("bad value for {key}: {value:?}"));
            match key.trim() {
                "page_size" => page_size = Some(value.trim().parse::<u32>().map_err(bad)?),
                "num_pages" => num_pages = Some(value.trim().parse::<u64>().map_err(bad)?),
                "content_seed" => content_seed = Some(value.trim().parse::<u64>().map_err(bad)?),
                "checksum" => checksum = Some(u64::from_str_radix(value.trim(), 16).map_err(bad)?),
                other => return Err(SnapshotError::Meta(format!("unknown key {other:?}"))),
            }
        }
        let missing = |k: &str| SnapshotError::Meta(format!("missing key {k}"));
        Ok(ImageMeta {
            page_size: page_size.ok_or_else(|| missing("page_size"))?,
            num_pages: num_pages.ok_or_else(|| missing("num_pages"))?,
            content_seed: content_seed.ok_or_else(|| missing("content_seed"))?,
            checksum: checksum.ok_or_else(|| missing("checksum"))?,
        })
    }
}

/// A persisted guest-memory snapshot: raw guest memory, an opaque VMM-state
/// blob and the metadata needed to regenerate and verify it.
///
/// The image is immutable once created; all page reads are positional so
/// any number of sessions may share one handle.
#[derive(Debug)]
pub struct SnapshotImage {
    dir: PathBuf,
    meta: ImageMeta,
    vmm_state_len: u64,
    guest_mem: File,
    verified: OnceLock<u64>,
}

fn geometry(num_pages: u64, page_size: u32) -> Result<u64> {
    if num_pages == 0 {
        return Err(SnapshotError::Geometry("num_pages must be at least 1".into()));
    }
    check_page_size(page_size)?;
    num_pages
        .checked_mul(page_size as u64)
        .filter(|len| *len <= isize::MAX as u64)
        .ok_or_else(|| SnapshotError::Geometry(format!("{num_pages} pages of {page_size} bytes overflow")))
}

/// Creates a synthetic snapshot in `dir` whose page `i` is
/// `regenerate(content_seed, i)`.
pub fn create_synthetic_image(
    dir: impl AsRef<Path>,
    num_pages: u64,
    page_size: u32,
    content_seed: u64,
    vmm_state_len: u64,
) -> Result<SnapshotImage> {
    let dir = dir.as_ref();
    geometry(num_pages, page_size)?;
    fs::create_dir_all(dir).at(dir)?;

    let mem_path = dir.join(GUEST_MEM_FILE);
    let mut out = BufWriter::with_capacity(1 << 20, File::create(&mem_path).at(&mem_path)?);
    let mut hasher = Xxh3::new();
    let mut page = vec![0u8; page_size as usize];
    for index in 0..num_pages {
        fill_page(content_seed, index, &mut page);
        hasher.update(&page);
        out.write_all(&page).at(&mem_path)?;
    }
    out.flush().at(&mem_path)?;
    drop(out);

    let vmm_path = dir.join(VMM_STATE_FILE);
    let mut vmm = vec![0u8; vmm_state_len as usize];
    fill_vmm_state(content_seed, &mut vmm);
    fs::write(&vmm_path, &vmm).at(&vmm_path)?;

    let meta = ImageMeta { page_size, num_pages, content_seed, checksum: hasher.digest() };
    let meta_path = dir.join(META_FILE);
    fs::write(&meta_path, meta.render()).at(&meta_path)?;

    let image = SnapshotImage::open(dir)?;
    let _ = image.verified.set(meta.checksum);
    Ok(image)
}

impl SnapshotImage {
    /// Opens a snapshot directory. Geometry is checked eagerly, the content
    /// checksum lazily on first [`verify`](Self::verify).
    pub fn open(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        let meta_path = dir.join(META_FILE);
        let meta = ImageMeta::parse(&fs::read_to_string(&meta_path).at(&meta_path)?)?;
        let expected = geometry(meta.num_pages, meta.page_size)?;

        let mem_path = dir.join(GUEST_MEM_FILE);
        let guest_mem = File::open(&mem_path).at(&mem_path)?;
        let found = guest_mem.metadata().at(&mem_path)?.len();
        if found < expected {
            return Err(SnapshotError::Truncated { expected, found });
        }
        if found > expected {
            return Err(SnapshotError::Trailing(found - expected));
        }
        let vmm_path = dir.join(VMM_STATE_FILE);
        let vmm_state_len = fs::metadata(&vmm_path).at(&vmm_path)?.len();
        Ok(SnapshotImage { dir, meta, vmm_state_len, guest_mem, verified: OnceLock::new() })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn meta(&self) -> &ImageMeta {
        &self.meta
    }

    pub fn id(&self) -> ImageId {
        ImageId(self.meta.checksum)
    }

    pub fn page_size(&self) -> u32 {
        self.meta.page_size
    }

    pub fn num_pages(&self) -> u64 {
        self.meta.num_pages
    }

    pub fn content_seed(&self) -> u64 {
        self.meta.content_seed
    }

    pub fn mem_len(&self) -> u64 {
        self.meta.num_pages * self.meta.page_size as u64
    }

    pub fn vmm_state_len(&self) -> u64 {
        self.vmm_state_len
    }

    pub fn guest_mem_path(&self) -> PathBuf {
        self.dir.join(GUEST_MEM_FILE)
    }

    /// Reads page `index` into `buf`, which must be exactly one page long.
    pub fn read_page_into(&self, index: u64, buf: &mut [u8]) -> Result<()> {
        assert_eq!(buf.len(), self.meta.page_size as usize, "buffer must hold one page");
        let offset = index
            .checked_mul(self.meta.page_size as u64)
            .filter(|off| *off < self.mem_len())
            .ok_or(SnapshotError::OutOfBounds {
                offset: index.saturating_mul(self.meta.page_size as u64),
                size: self.mem_len(),
            })?;
        self.guest_mem.read_exact_at(buf, offset).at(&self.guest_mem_path())
    }

    pub fn page(&self, index: u64) -> Result<Vec<u8>> {
        let mut buf = vec![0u8; self.meta.page_size as usize];
        self.read_page_into(index, &mut buf)?;
        Ok(buf)
    }

    pub fn read_vmm_state(&self) -> Result<Vec<u8>> {
        let path = self.dir.join(VMM_STATE_FILE);
        fs::read(&path).at(&path)
    }

    /// Recomputes the guest-memory digest from the file.
    pub fn compute_checksum(&self) -> Result<u64> {
        let path = self.guest_mem_path();
        let mut file = File::open(&path).at(&path)?;
        let mut hasher = Xxh3::new();
        let mut buf = vec![0u8; 1 << 20];
        loop {
            let n = file.read(&mut buf).at(&path)?;
            if n == 0 {
                break;
            }
            hasher.update(&buf[..n]);
        }
        Ok(hasher.digest())
    }

    /// Checks the recorded checksum against the file contents. The digest is
    /// computed once per handle.
    pub fn verify(&self) -> Result<()> {
        let computed = match self.verified.get() {
            Some(c) => *c,
            None => {
                let c = self.compute_checksum()?;
                *self.verified.get_or_init(|| c)
            }
        };
        if computed != self.meta.checksum {
            return Err(SnapshotError::Checksum { recorded: self.meta.checksum, computed });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::snapshot::regenerate;

    #[test]
    fn minimal_image() {
        let dir = tempfile::tempdir().unwrap();
        let image = create_synthetic_image(dir.path(), 1, 4096, 0, 0).unwrap();
        assert_eq!(image.mem_len(), 4096);
        assert_eq!(image.vmm_state_len(), 0);
        let expected = xxhash_rust::xxh3::xxh3_64(&regenerate(0, 0, 4096));
        assert_eq!(image.meta().checksum, expected);
        image.verify().unwrap();
    }

    #[test]
    fn rejects_bad_geometry() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            create_synthetic_image(dir.path(), 0, 4096, 0, 0),
            Err(SnapshotError::Geometry(_))
        ));
        assert!(matches!(
            create_synthetic_image(dir.path(), 4, 3000, 0, 0),
            Err(SnapshotError::PageSize(3000))
        ));
        assert!(matches!(
            create_synthetic_image(dir.path(), 4, 256, 0, 0),
            Err(SnapshotError::PageSize(256))
        ));
        assert!(matches!(
            create_synthetic_image(dir.path(), u64::MAX / 2, 4096, 0, 0),
            Err(SnapshotError::Geometry(_))
        ));
    }

    #[test]
    fn reopen_and_detect_tampering() {
        let dir = tempfile::tempdir().unwrap();
        create_synthetic_image(dir.path(), 8, 512, 9, 100).unwrap();
        let image = SnapshotImage::open(dir.path()).unwrap();
        assert_eq!(image.vmm_state_len(), 100);
        assert_eq!(image.page(3).unwrap(), regenerate(9, 3, 512));
        image.verify().unwrap();

        let mem = dir.path().join(GUEST_MEM_FILE);
        let mut bytes = fs::read(&mem).unwrap();
        bytes[700] ^= 1;
        fs::write(&mem, &bytes).unwrap();
        let image = SnapshotImage::open(dir.path()).unwrap();
        assert!(matches!(image.verify(), Err(SnapshotError::Checksum { .. })));

        bytes.pop();
        fs::write(&mem, &bytes).unwrap();
        assert!(matches!(SnapshotImage::open(dir.path()), Err(SnapshotError::Truncated { .. })));
    }

    #[test]
    fn out_of_bounds_page() {
        let dir = tempfile::tempdir().unwrap();
        let image = create_synthetic_image(dir.path(), 2, 512, 1, 0).unwrap();
        assert!(matches!(image.page(2), Err(SnapshotError::OutOfBounds { .. })));
    }
}
