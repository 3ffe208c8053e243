use std::collections::{BTreeMap, HashSet};

use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use reapsnap_core::analysis::*;
use reapsnap_core::engine::{Breakdown, RestoreMode, RestoreReport};
use reapsnap_core::snapshot::PageTrace;
use reapsnap_core::workload::{preset, synthesize_layout};

/// Run lengths by walking a bitmap left to right.
fn oracle_runs(pages: &HashSet<u64>) -> Vec<u64> {
    let max = pages.iter().copied().max().map_or(0, |m| m + 2);
    let mut runs = Vec::new();
    let mut cur = 0;
    for p in 0..max {
        if pages.contains(&p) {
            cur += 1;
        } else if cur > 0 {
            runs.push(cur);
            cur = 0;
        }
    }
    runs
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn contiguity_matches_bitmap_walk(set in prop::collection::hash_set(0u64..600, 0..250)) {
        let runs = oracle_runs(&set);
        let s = contiguity_of_pages(set.iter().copied());
        prop_assert_eq!(s.run_count, runs.len() as u64);
        prop_assert_eq!(s.histogram.iter().map(|(l, c)| l * c).sum::<u64>(), set.len() as u64);
        prop_assert_eq!(s.max_run_length, runs.iter().copied().max().unwrap_or(0));
        let mut hist = BTreeMap::new();
        for r in &runs {
            *hist.entry(*r).or_insert(0u64) += 1;
        }
        prop_assert_eq!(&s.histogram, &hist);
        match s.mean_run_length {
            None => prop_assert!(set.is_empty()),
            Some(m) => prop_assert!((m - set.len() as f64 / runs.len() as f64).abs() < 1e-12),
        }
    }

    #[test]
    fn reuse_matches_nested_loops(
        a in prop::collection::vec(0u64..300, 0..200),
        b in prop::collection::vec(0u64..300, 0..200),
    ) {
        let (mut da, mut db) = (a.clone(), b.clone());
        da.sort_unstable(); da.dedup();
        db.sort_unstable(); db.dedup();
        let same = db.iter().filter(|x| da.contains(x)).count() as u64;
        let ta = PageTrace::from_pages(4096, da.clone()).unwrap();
        let tb = PageTrace::from_pages(4096, db.clone()).unwrap();
        let r = reuse_stats(&ta, &tb).unwrap();
        prop_assert_eq!(r.same, same);
        prop_assert_eq!(r.unique_a, da.len() as u64 - same);
        prop_assert_eq!(r.unique_b, db.len() as u64 - same);
        prop_assert_eq!(r.same + r.unique_b, db.len() as u64);
        prop_assert!((0.0..=1.0).contains(&r.reuse_fraction));
        if !db.is_empty() {
            prop_assert!((r.reuse_fraction - same as f64 / db.len() as f64).abs() < 1e-12);
        }
        prop_assert_eq!(footprint(&ta), da.len() as f64 * 4096.0 / 1048576.0);
    }
}

#[test]
fn contiguity_ignores_trace_order() {
    let p = preset("helloworld").unwrap();
    let layout = synthesize_layout(&p, 65536).unwrap();
    let base = contiguity_of_pages(layout.stable_order().iter().copied());
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut pages = layout.stable_order().to_vec();
    for _ in 0..100 {
        pages.shuffle(&mut rng);
        let t = PageTrace::from_pages(4096, pages.clone()).unwrap();
        assert_eq!(contiguity_stats(&t), base);
    }
}

#[test]
fn reuse_constructed_pairs() {
    let a = PageTrace::from_pages(4096, 1..=100).unwrap();
    let b = PageTrace::from_pages(4096, (1..=97).chain(200..=202)).unwrap();
    let r = reuse_stats(&a, &b).unwrap();
    assert_eq!((r.same, r.unique_b), (97, 3));
    assert_eq!(r.reuse_fraction, 0.97);
    let e = PageTrace::empty(4096).unwrap();
    assert_eq!(reuse_stats(&a, &e).unwrap().reuse_fraction, 1.0);
}

#[test]
fn speedup_summary_round_trips_to_json_and_csv() {
    let rep = |mode, ms: f64, faults| RestoreReport {
        mode,
        total_latency_us: ms * 1e3,
        breakdown: Breakdown { compute_us: ms * 1e3, ..Default::default() },
        faults_served: faults,
        buffered_faults: 0,
        prefetched_pages: 0,
        prefetched_unused: 0,
        pages_touched: 0,
        forwarding_us: 0.0,
        effective_read_bandwidth_mbps: 0.0,
    };
    let entries = vec![
        ("x".to_string(), rep(RestoreMode::LazyBaseline, 370.0, 1000)),
        ("x".to_string(), rep(RestoreMode::Prefetch, 100.0, 30)),
    ];
    let s = speedup_report(&entries).unwrap();
    assert!((s.rows[0].speedup - 3.7).abs() < 1e-12);
    let json: serde_json::Value = serde_json::from_str(&s.to_json()).unwrap();
    assert!((json["mean_speedup"].as_f64().unwrap() - 3.7).abs() < 1e-12);
    let csv = render_speedup_csv(&s).unwrap();
    assert_eq!(csv.lines().count(), 2);
}
