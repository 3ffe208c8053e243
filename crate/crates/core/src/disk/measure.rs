//! Real-device throughput probe, in the spirit of a handful of fio jobs.
//!
//! Measurements never feed the simulation unless the caller turns them into
//! a calibration table explicitly.

use std::fmt;
use std::fs::{File, OpenOptions};
use std::io::Read;
use std::os::unix::fs::{FileExt, OpenOptionsExt};
use std::os::unix::io::AsRawFd;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use super::{DiskError, MIB};
use crate::snapshot::mix64;

pub const MIN_FILE_LEN: u64 = 64 << 20;
const PAGE: u64 = 4096;
const RANDOM_READS: u64 = 4096;
const BULK_CHUNK: usize = 8 << 20;
const BULK_LIMIT: u64 = 256 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AccessPattern {
    /// One 4 KB read at a time at random page offsets.
    Serial4K,
    /// `k` threads issuing 4 KB random reads.
    Parallel4K(u32),
    /// Large sequential reads through the page cache.
    Bulk,
    /// Large sequential reads with `O_DIRECT`.
    BulkBypass,
}

impl fmt::Display for AccessPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AccessPattern::Serial4K => f.write_str("serial-4K"),
            AccessPattern::Parallel4K(k) => write!(f, "parallel-4Kx{k}"),
            AccessPattern::Bulk => f.write_str("bulk"),
            AccessPattern::BulkBypass => f.write_str("bulk-bypass"),
        }
    }
}

impl FromStr for AccessPattern {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "serial-4K" | "serial-4k" => Ok(AccessPattern::Serial4K),
            "bulk" => Ok(AccessPattern::Bulk),
            "bulk-bypass" => Ok(AccessPattern::BulkBypass),
            other => other
                .strip_prefix("parallel-4Kx")
                .or_else(|| other.strip_prefix("parallel-4kx"))
                .and_then(|k| k.parse().ok())
                .filter(|&k: &u32| k >= 1)
                .map(AccessPattern::Parallel4K)
                .ok_or_else(|| format!("unknown pattern {other:?}")),
        }
    }
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> DiskError + '_ {
    move |source| DiskError::Io { path: path.to_path_buf(), source }
}

/// Drops the file's clean pages from the host page cache so each pattern
/// starts cold.
fn evict(file: &File) {
    // SAFETY: plain advisory syscall on a valid descriptor.
    unsafe {
        libc::posix_fadvise(file.as_raw_fd(), 0, 0, libc::POSIX_FADV_DONTNEED);
    }
}

fn random_offsets(seed: u64, count: u64, pages: u64) -> impl Iterator<Item = u64> {
    (0..count).map(move |i| (mix64(seed ^ mix64(i)) % pages) * PAGE)
}

/// Measures read throughput (MB/s) of `path` under `pattern`.
pub fn measure_real(path: impl AsRef<Path>, pattern: AccessPattern) -> Result<f64, DiskError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(io_err(path))?;
    let size = file.metadata().map_err(io_err(path))?.len();
    if size < MIN_FILE_LEN {
        return Err(DiskError::TooSmall { path: path.to_path_buf(), size, min: MIN_FILE_LEN });
    }
    let pages = size / PAGE;
    evict(&file);

    let start = Instant::now();
    let bytes = match pattern {
        AccessPattern::Serial4K => {
            let mut buf = vec![0u8; PAGE as usize];
            for off in random_offsets(1, RANDOM_READS, pages) {
                file.read_exact_at(&mut buf, off).map_err(io_err(path))?;
            }
            RANDOM_READS * PAGE
        }
        AccessPattern::Parallel4K(k) => {
            let k = k.max(1) as u64;
            let per_thread = RANDOM_READS.div_ceil(k);
            std::thread::scope(|s| -> Result<(), DiskError> {
                let handles: Vec<_> = (0..k)
                    .map(|t| {
                        let file = &file;
                        s.spawn(move || -> std::io::Result<()> {
                            let mut buf = vec![0u8; PAGE as usize];
                            for off in random_offsets(100 + t, per_thread, pages) {
                                file.read_exact_at(&mut buf, off)?;
                            }
                            Ok(())
                        })
                    })
                    .collect();
                for h in handles {
                    h.join().expect("reader thread panicked").map_err(io_err(path))?;
                }
                Ok(())
            })?;
            per_thread * k * PAGE
        }
        AccessPattern::Bulk => {
            let mut reader = &file;
            let mut buf = vec![0u8; BULK_CHUNK];
            let mut total = 0u64;
            while total < BULK_LIMIT.min(size) {
                let n = reader.read(&mut buf).map_err(io_err(path))?;
                if n == 0 {
                    break;
                }
                total += n as u64;
            }
            total
        }
        AccessPattern::BulkBypass => bulk_bypass(path, size)?,
    };
    let secs = start.elapsed().as_secs_f64().max(1e-9);
    Ok(bytes as f64 / MIB / secs)
}

fn bulk_bypass(path: &Path, size: u64) -> Result<u64, DiskError> {
    let unsupported = |e: std::io::Error| {
        if e.raw_os_error() == Some(libc::EINVAL) {
            DiskError::Unsupported(format!("O_DIRECT reads on {}: {e}", path.display()))
        } else {
            DiskError::Io { path: path.to_path_buf(), source: e }
        }
    };
    if !cfg!(target_os = "linux") {
        return Err(DiskError::Unsupported("O_DIRECT is only wired up on Linux".into()));
    }
    let mut file = OpenOptions::new().read(true).custom_flags(libc::O_DIRECT).open(path).map_err(unsupported)?;
    let mut buf = crate::snapshot::AlignedBuf::zeroed(BULK_CHUNK, crate::snapshot::DIRECT_ALIGN);
    let mut total = 0u64;
    while total < BULK_LIMIT.min(size) {
        let n = file.read(&mut buf[..]).map_err(unsupported)?;
        if n == 0 {
            break;
        }
        total += n as u64;
    }
    Ok(total)
}
