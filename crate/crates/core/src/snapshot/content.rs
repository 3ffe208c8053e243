//! Synthetic page content.
//!
//! Every byte of a synthetic guest image is a pure function of the content
//! seed, the page index and the 8-byte lane inside the page, so any page can
//! be regenerated on demand without keeping golden copies around.

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[inline]
fn page_key(seed: u64, page_index: u64) -> u64 {
    mix64(seed ^ mix64(page_index.wrapping_add(GOLDEN)))
}

/// The 64-bit word stored at `lane` (word offset) of page `page_index`.
#[inline]
pub fn page_word(seed: u64, page_index: u64, lane: u64) -> u64 {
    mix64(page_key(seed, page_index).wrapping_add(lane.wrapping_mul(GOLDEN)))
}

/// Fills `buf` with the content of page `page_index`. `buf.len()` must be a
/// multiple of 8.
pub fn fill_page(seed: u64, page_index: u64, buf: &mut [u8]) {
    debug_assert!(buf.len().is_multiple_of(8));
    let key = page_key(seed, page_index);
    for (lane, chunk) in buf.chunks_exact_mut(8).enumerate() {
        let word = mix64(key.wrapping_add((lane as u64).wrapping_mul(GOLDEN)));
        chunk.copy_from_slice(&word.to_le_bytes());
    }
}

/// Returns a freshly allocated copy of page `page_index`.
pub fn regenerate(seed: u64, page_index: u64, page_size: usize) -> Vec<u8> {
    let mut page = vec![0u8; page_size];
    fill_page(seed, page_index, &mut page);
    page
}

/// Opaque VMM-state bytes; only the length matters to the restore path.
pub(crate) fn fill_vmm_state(seed: u64, buf: &mut [u8]) {
    let key = mix64(seed ^ 0x564D_4D5F_5354_4154); // "VMM_STAT"
    for (i, b) in buf.iter_mut().enumerate() {
        *b = (mix64(key.wrapping_add((i as u64 / 8).wrapping_mul(GOLDEN))) >> ((i % 8) * 8)) as u8;
    }
}
