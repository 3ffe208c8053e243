mod common;

use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use reapsnap_core::snapshot::*;

use common::{image, oracle_page};

fn trace_strategy(max_pages: usize) -> impl Strategy<Value = PageTrace> {
    (
        prop::sample::select(vec![512u32, 1024, 2048, 4096, 8192, 65536]),
        prop::collection::hash_set(0u64..1 << 24, 0..max_pages),
        any::<u64>(),
    )
        .prop_map(|(ps, set, seed)| {
            let mut pages: Vec<u64> = set.into_iter().collect();
            pages.sort_unstable();
            pages.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            PageTrace::from_pages(ps, pages).unwrap()
        })
}

fn decode_expecting(bytes: &[u8], page_size: u32) -> Result<PageTrace> {
    let t = PageTrace::decode(bytes)?;
    if t.page_size() != page_size {
        return Err(SnapshotError::PageSizeMismatch { expected: page_size, found: t.page_size() });
    }
    Ok(t)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn trace_round_trip_is_byte_exact(trace in trace_strategy(300)) {
        let bytes = trace.encode();
        prop_assert_eq!(bytes.len(), TRACE_HEADER_LEN + 8 * trace.len());
        let back = PageTrace::decode(&bytes).unwrap();
        prop_assert_eq!(&back, &trace);
        prop_assert_eq!(back.encode(), bytes);
    }

    #[test]
    fn ws_round_trip_is_byte_exact(trace in trace_strategy(24), fill in any::<u8>()) {
        let len = trace.footprint_bytes() as usize;
        let pages: Vec<u8> = (0..len).map(|i| (i as u8).wrapping_mul(31) ^ fill).collect();
        let ws = WorkingSetFile::from_parts(trace.clone(), pages);
        let bytes = ws.encode();
        prop_assert_eq!(bytes.len() as u64, ws.file_len());
        let back = WorkingSetFile::decode(&bytes, trace).unwrap();
        prop_assert_eq!(&back, &ws);
        prop_assert_eq!(back.encode(), bytes);
    }
}

#[test]
fn every_single_byte_header_corruption_is_detected() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for case in 0..40 {
        let ps = [512u32, 4096, 8192][case % 3];
        let n = rng.random_range(0..40);
        let mut pages: Vec<u64> = (0..200).collect();
        pages.shuffle(&mut rng);
        let trace = PageTrace::from_pages(ps, pages[..n].to_vec()).unwrap();
        let bytes = trace.encode();
        let ws = WorkingSetFile::from_parts(trace.clone(), vec![0xA5; n * ps as usize]);
        let ws_bytes = ws.encode();
        for pos in 0..TRACE_HEADER_LEN {
            for v in 0..=255u8 {
                if v != bytes[pos] {
                    let mut bad = bytes.clone();
                    bad[pos] = v;
                    assert!(decode_expecting(&bad, ps).is_err(), "trace byte {pos} -> {v:#x} accepted");
                }
            }
        }
        for pos in 0..WS_HEADER_LEN {
            for v in 0..=255u8 {
                if v != ws_bytes[pos] {
                    let mut bad = ws_bytes.clone();
                    bad[pos] = v;
                    assert!(WorkingSetFile::decode(&bad, trace.clone()).is_err(), "ws byte {pos} -> {v:#x} accepted");
                }
            }
        }
    }
}

#[test]
fn page_size_corruption_needs_the_expected_size() {
    // 4096 -> 2048 keeps a structurally valid trace; only the expected
    // geometry rejects it.
    let trace = PageTrace::from_pages(4096, [1, 2]).unwrap();
    let mut bad = trace.encode();
    bad[9] = 0x08;
    assert_eq!(PageTrace::decode(&bad).unwrap().page_size(), 2048);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.bin");
    std::fs::write(&path, &bad).unwrap();
    assert!(matches!(PageTrace::read_expecting(&path, 4096), Err(SnapshotError::PageSizeMismatch { .. })));
}

#[test]
fn distinct_errors_per_violation() {
    let good = PageTrace::from_pages(4096, [3, 4]).unwrap().encode();
    let mut magic = good.clone();
    magic[0] = b'X';
    assert!(matches!(PageTrace::decode(&magic), Err(SnapshotError::BadMagic { .. })));
    let mut version = good.clone();
    version[4] = 2;
    assert!(matches!(PageTrace::decode(&version), Err(SnapshotError::Version(2))));
    assert!(matches!(PageTrace::decode(&good[..good.len() - 1]), Err(SnapshotError::Truncated { .. })));
    assert!(matches!(PageTrace::decode(&good[..10]), Err(SnapshotError::Truncated { .. })));
    let mut trailing = good.clone();
    trailing.push(0);
    assert!(matches!(PageTrace::decode(&trailing), Err(SnapshotError::Trailing(1))));
    let mut misaligned = good.clone();
    misaligned[20] = 1;
    assert!(matches!(PageTrace::decode(&misaligned), Err(SnapshotError::Misaligned { .. })));
    let mut dup = good.clone();
    let second: [u8; 8] = dup[28..36].try_into().unwrap();
    dup[20..28].copy_from_slice(&second);
    assert!(matches!(PageTrace::decode(&dup), Err(SnapshotError::Duplicate(_))));
}

#[test]
fn trace_examples() {
    let t = PageTrace::from_pages(4096, [3, 4, 5, 42]).unwrap();
    assert_eq!(t.offsets(), &[12288, 16384, 20480, 172032]);
    let empty = PageTrace::empty(4096).unwrap().encode();
    assert_eq!(empty.len(), TRACE_HEADER_LEN);
    assert_eq!(&empty[..4], b"RPTR");
    assert_eq!(u64::from_le_bytes(empty[12..20].try_into().unwrap()), 0);
}

#[test]
fn ws_from_image_matches_oracle_pages() {
    let (_d, img) = image(16, 42);
    let trace = PageTrace::new(4096, vec![0, 8192]).unwrap();
    let ws = build_working_set(&img, &trace).unwrap();
    let mut expected = oracle_page(42, 0, 4096);
    expected.extend(oracle_page(42, 2, 4096));
    assert_eq!(ws.pages(), &expected[..]);
    assert_eq!(img.page(5).unwrap(), oracle_page(42, 5, 4096));

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ws.bin");
    ws.write(&path).unwrap();
    let back = WorkingSetFile::read(&path, trace.clone()).unwrap();
    assert_eq!(back.pages(), ws.pages());
    assert_eq!(back.trace().offsets(), ws.trace().offsets());
    match WorkingSetFile::read_direct(&path, trace.clone()) {
        Ok(direct) => assert_eq!(direct.pages(), ws.pages()),
        Err(SnapshotError::BypassUnsupported { .. }) => {}
        Err(e) => panic!("direct read failed: {e}"),
    }
}

#[test]
fn validation_finds_injected_corruption() {
    let (_d, img) = image(256, 5);
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for _ in 0..200 {
        let mut pages: Vec<u64> = (0..256).collect();
        pages.shuffle(&mut rng);
        let n = rng.random_range(1..64);
        let trace = PageTrace::from_pages(4096, pages[..n].to_vec()).unwrap();
        let mut ws = build_working_set(&img, &trace).unwrap();
        assert!(validate_working_set(&img, &trace, &ws).unwrap().is_ok());
        let victim = rng.random_range(0..n);
        let at = victim * 4096 + rng.random_range(0..4096);
        ws.pages_mut()[at] ^= rng.random_range(1..=255u8);
        assert_eq!(validate_working_set(&img, &trace, &ws).unwrap(), WsValidation::Mismatch { first_index: victim });
    }
    let trace = PageTrace::from_pages(4096, [1, 2]).unwrap();
    let mut ws = build_working_set(&img, &trace).unwrap();
    ws.pages_mut().truncate(4096);
    assert!(matches!(validate_working_set(&img, &trace, &ws).unwrap(), WsValidation::Structural { .. }));
}

#[test]
fn build_rejects_out_of_bounds_and_corrupt_images() {
    let (dir, img) = image(8, 1);
    let trace = PageTrace::from_pages(4096, [8]).unwrap();
    assert!(matches!(build_working_set(&img, &trace), Err(SnapshotError::OutOfBounds { .. })));

    let mut mem = std::fs::read(img.guest_mem_path()).unwrap();
    mem[100] ^= 1;
    std::fs::write(img.guest_mem_path(), &mem).unwrap();
    let reopened = SnapshotImage::open(dir.path()).unwrap();
    let ok = PageTrace::from_pages(4096, [1]).unwrap();
    assert!(matches!(build_working_set(&reopened, &ok), Err(SnapshotError::Checksum { .. })));
}
