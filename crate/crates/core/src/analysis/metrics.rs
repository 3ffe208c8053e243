use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use super::AnalysisError;
use crate::disk::MIB;
use crate::snapshot::PageTrace;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContiguityStats {
    pub run_count: u64,
    /// `None` for an empty page set.
    pub mean_run_length: Option<f64>,
    pub max_run_length: u64,
    /// run length -> number of runs
    pub histogram: BTreeMap<u64, u64>,
}

/// Maximal runs of adjacent pages in guest-physical order. Input order and
/// duplicates do not matter.
pub fn contiguity_of_pages(pages: impl IntoIterator<Item = u64>) -> ContiguityStats {
    let mut sorted: Vec<u64> = pages.into_iter().collect();
    sorted.sort_unstable();
    sorted.dedup();
    let mut histogram = BTreeMap::new();
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i + 1;
        while j < sorted.len() && sorted[j] == sorted[j - 1] + 1 {
            j += 1;
        }
        *histogram.entry((j - i) as u64).or_insert(0) += 1;
        i = j;
    }
    let run_count: u64 = histogram.values().sum();
    ContiguityStats {
        run_count,
        mean_run_length: (run_count > 0).then(|| sorted.len() as f64 / run_count as f64),
        max_run_length: histogram.keys().next_back().copied().unwrap_or(0),
        histogram,
    }
}

pub fn contiguity_stats(trace: &PageTrace) -> ContiguityStats {
    contiguity_of_pages(trace.page_indices())
}

/// Page overlap of invocation B relative to invocation A.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReuseStats {
    pub same: u64,
    pub unique_a: u64,
    pub unique_b: u64,
    /// `same / |B|`; 1.0 when B is empty.
    pub reuse_fraction: f64,
}

pub fn reuse_of_pages(a: &HashSet<u64>, b: &HashSet<u64>) -> ReuseStats {
    let same = a.intersection(b).count() as u64;
    let unique_a = a.len() as u64 - same;
    let unique_b = b.len() as u64 - same;
    let reuse_fraction = if b.is_empty() { 1.0 } else { same as f64 / b.len() as f64 };
    ReuseStats { same, unique_a, unique_b, reuse_fraction }
}

pub fn reuse_stats(a: &PageTrace, b: &PageTrace) -> Result<ReuseStats, AnalysisError> {
    if a.page_size() != b.page_size() {
        return Err(AnalysisError::PageSizeMismatch { a: a.page_size(), b: b.page_size() });
    }
    let sa: HashSet<u64> = a.page_indices().collect();
    let sb: HashSet<u64> = b.page_indices().collect();
    Ok(reuse_of_pages(&sa, &sb))
}

/// Working-set size in MB (2^20 bytes).
pub fn footprint_mb(pages: u64, page_size: u32) -> f64 {
    (pages * page_size as u64) as f64 / MIB
}

pub fn footprint(trace: &PageTrace) -> f64 {
    footprint_mb(trace.len() as u64, trace.page_size())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn contiguity_examples() {
        let s = contiguity_of_pages([80, 10, 11, 50, 12, 81]);
        assert_eq!(s.run_count, 3);
        assert_eq!(s.mean_run_length, Some(2.0));
        assert_eq!(s.max_run_length, 3);
        assert_eq!(s.histogram, BTreeMap::from([(1, 1), (2, 1), (3, 1)]));
        let one = contiguity_of_pages(0..100);
        assert_eq!((one.run_count, one.max_run_length), (1, 100));
        let empty = contiguity_of_pages([]);
        assert_eq!((empty.run_count, empty.mean_run_length), (0, None));
    }

    #[test]
    fn reuse_examples() {
        let a: HashSet<u64> = (1..=100).collect();
        let b: HashSet<u64> = (1..=97).chain(200..=202).collect();
        let r = reuse_of_pages(&a, &b);
        assert_eq!((r.same, r.unique_a, r.unique_b), (97, 3, 3));
        assert!((r.reuse_fraction - 0.97).abs() < 1e-12);
        assert_eq!(reuse_of_pages(&a, &a).reuse_fraction, 1.0);
        let c: HashSet<u64> = (500..600).collect();
        assert_eq!(reuse_of_pages(&a, &c).reuse_fraction, 0.0);
    }

    #[test]
    fn reuse_rejects_page_size_mismatch() {
        let a = PageTrace::from_pages(4096, [1]).unwrap();
        let b = PageTrace::from_pages(8192, [1]).unwrap();
        assert!(reuse_stats(&a, &b).is_err());
    }

    #[test]
    fn footprint_examples() {
        assert_eq!(footprint_mb(2048, 4096), 8.0);
        assert_eq!(footprint_mb(0, 4096), 0.0);
        assert_eq!(footprint_mb(25344, 4096), 99.0);
    }
}
