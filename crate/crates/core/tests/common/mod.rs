#![allow(dead_code)]

use std::collections::HashSet;

use reapsnap_core::engine::{InstallPolicy, RestoreMode};
use reapsnap_core::snapshot::{create_synthetic_image, SnapshotImage};

/// Page content written from scratch here rather than through the crate:
/// little-endian SplitMix64 words keyed by (seed, page, lane).
pub fn oracle_page(seed: u64, page: u64, page_size: usize) -> Vec<u8> {
    const G: u64 = 0x9E37_79B9_7F4A_7C15;
    fn fin(mut z: u64) -> u64 {
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    let key = fin(seed ^ fin(page.wrapping_add(G)));
    let mut out = Vec::with_capacity(page_size);
    for lane in 0..(page_size / 8) as u64 {
        out.extend_from_slice(&fin(key.wrapping_add(lane.wrapping_mul(G))).to_le_bytes());
    }
    out
}

pub fn image(num_pages: u64, seed: u64) -> (tempfile::TempDir, SnapshotImage) {
    let dir = tempfile::tempdir().unwrap();
    let image = create_synthetic_image(dir.path(), num_pages, 4096, seed, 64 << 10).unwrap();
    (dir, image)
}

/// Reference simulator: a plain vector of resident pages scanned linearly.
#[derive(Debug, Default, PartialEq)]
pub struct Naive {
    pub faults: u64,
    pub buffered: u64,
    pub fault_order: Vec<u64>,
    pub resident: HashSet<u64>,
    pub touched: u64,
    pub unused: u64,
}

pub fn naive(mode: RestoreMode, trace: &[u64], install: InstallPolicy, seq: &[u64]) -> Naive {
    let mut resident: Vec<u64> = Vec::new();
    let mut fetched: Vec<u64> = Vec::new();
    if mode == RestoreMode::Prefetch {
        fetched = trace.to_vec();
        if install == InstallPolicy::Eager {
            resident = trace.to_vec();
        }
    }
    if !resident.contains(&0) {
        resident.push(0);
    }
    let mut out = Naive::default();
    let mut touched: Vec<u64> = Vec::new();
    for &p in seq {
        if p != 0 && !touched.contains(&p) {
            touched.push(p);
        }
        if resident.contains(&p) {
            continue;
        }
        resident.push(p);
        if fetched.contains(&p) {
            out.buffered += 1;
        } else {
            out.faults += 1;
            out.fault_order.push(p);
        }
    }
    out.touched = touched.len() as u64;
    out.unused = fetched.iter().filter(|p| !touched.contains(p)).count() as u64;
    out.resident = resident.into_iter().collect();
    out
}
