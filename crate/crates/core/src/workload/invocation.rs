use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Access, AccessKind, AccessSequence, FunctionProfile, Layout, Phase, WorkloadError};
use crate::snapshot::mix64;

const UNIQUE_WRITE_SHARE: f64 = 0.25;
const STABLE_WRITE_SHARE: f64 = 0.10;

/// Input-dependent pages for `input_seed`.
///
/// The pool is cut into `pool_len / u` disjoint chunks and the seed picks
/// one, so seeds that differ modulo the chunk count never share a page.
pub fn unique_pages_for(profile: &FunctionProfile, layout: &Layout, input_seed: u64) -> Result<Vec<u64>, WorkloadError> {
    let u = profile.unique_pages() as usize;
    if u == 0 {
        return Ok(Vec::new());
    }
    let pool = layout.unique_pool();
    if pool.len() < u {
        return Err(WorkloadError::NotEnoughFreePages { need: u as u64, have: pool.len() as u64 });
    }
    let chunks = (pool.len() / u) as u64;
    let k = (input_seed % chunks) as usize;
    Ok(pool[k * u..(k + 1) * u].to_vec())
}

fn adjacent_groups(pages: &[u64]) -> Vec<&[u64]> {
    let mut groups = Vec::new();
    let mut start = 0;
    for i in 1..=pages.len() {
        if i == pages.len() || pages[i] != pages[i - 1] + 1 {
            groups.push(&pages[start..i]);
            start = i;
        }
    }
    groups
}

pub fn derive_invocation(profile: &FunctionProfile, layout: &Layout, input_seed: u64) -> Result<AccessSequence, WorkloadError> {
    if layout.profile != profile.name || layout.stable_len() != profile.stable_pages() {
        return Err(WorkloadError::LayoutMismatch(layout.profile.clone()));
    }
    let uniques = unique_pages_for(profile, layout, input_seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(mix64(profile.layout_seed) ^ input_seed);
    let mut kind = |share: f64| if rng.random_bool(share) { AccessKind::Write } else { AccessKind::Read };

    let stable = layout.stable_order();
    let infra = profile.infra_pages as usize;
    let mut accesses: Vec<Access> = stable[..infra]
        .iter()
        .map(|&page| Access { phase: Phase::Conn, page, kind: kind(STABLE_WRITE_SHARE) })
        .collect();
    let mut body: Vec<Access> = stable[infra..]
        .iter()
        .map(|&page| Access { phase: Phase::Body, page, kind: kind(STABLE_WRITE_SHARE) })
        .collect();
    let groups: Vec<Vec<Access>> = adjacent_groups(&uniques)
        .into_iter()
        .map(|g| g.iter().map(|&page| Access { phase: Phase::Body, page, kind: kind(UNIQUE_WRITE_SHARE) }).collect())
        .collect();
    for group in groups {
        let at = rng.random_range(0..=body.len());
        body.splice(at..at, group);
    }
    accesses.extend(body);
    AccessSequence::new(accesses, profile.compute_us)
}
