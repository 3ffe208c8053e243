use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{FunctionProfile, WorkloadError};

/// A maximal block of adjacent stable pages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Run {
    pub start: u64,
    pub len: u64,
}

impl Run {
    pub fn pages(&self) -> std::ops::Range<u64> {
        self.start..self.start + self.len
    }
}

/// Stable working-set placement for one profile on one image geometry.
///
/// `runs` is in touch order. Page 0 never appears: it is reserved for the
/// base-address calibration fault.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layout {
    pub profile: String,
    pub num_pages: u64,
    runs: Vec<Run>,
    order: Vec<u64>,
    unique_pool: Vec<u64>,
}

impl Layout {
    pub fn runs(&self) -> &[Run] {
        &self.runs
    }

    /// Stable pages in touch order.
    pub fn stable_order(&self) -> &[u64] {
        &self.order
    }

    pub fn stable_len(&self) -> u64 {
        self.order.len() as u64
    }

    /// Non-stable pages from which input-dependent pages are drawn, grouped
    /// into short adjacent runs.
    pub fn unique_pool(&self) -> &[u64] {
        &self.unique_pool
    }

    pub fn mean_run_length(&self) -> f64 {
        if self.runs.is_empty() {
            return 0.0;
        }
        self.order.len() as f64 / self.runs.len() as f64
    }
}

pub(crate) fn geometric(rng: &mut impl Rng, mean: f64) -> u64 {
    if mean <= 1.0 {
        return 1;
    }
    let p = 1.0 / mean;
    let u: f64 = 1.0 - rng.random::<f64>();
    1 + (u.ln() / (1.0 - p).ln()).floor() as u64
}

fn split_runs(rng: &mut impl Rng, total: u64, mean: f64) -> Vec<u64> {
    let mut lens = Vec::new();
    let mut left = total;
    while left > 0 {
        let len = geometric(rng, mean).min(left);
        lens.push(len);
        left -= len;
    }
    lens
}

pub fn synthesize_layout(profile: &FunctionProfile, num_pages: u64) -> Result<Layout, WorkloadError> {
    profile.validate()?;
    let stable = profile.stable_pages();
    let available = num_pages.saturating_sub(1);
    if profile.ws_pages > available {
        return Err(WorkloadError::LayoutDoesNotFit { stable, runs: 0, available });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(profile.layout_seed);
    let lens = split_runs(&mut rng, stable, profile.mean_run_length);
    let r = lens.len() as u64;
    let required = stable + r.saturating_sub(1);
    if required > available {
        return Err(WorkloadError::LayoutDoesNotFit { stable, runs: r, available });
    }
    let slack = available - required;

    // Uniform placement: choose r bar positions among slack + r slots.
    let mut bars = rand::seq::index::sample(&mut rng, (slack + r) as usize, r as usize).into_vec();
    bars.sort_unstable();
    let mut runs = Vec::with_capacity(lens.len());
    let mut cursor = 1u64;
    let mut prev_bar: Option<usize> = None;
    for (i, (&len, &bar)) in lens.iter().zip(&bars).enumerate() {
        let extra = match prev_bar {
            None => bar as u64,
            Some(p) => (bar - p - 1) as u64,
        };
        cursor += extra + u64::from(i > 0);
        runs.push(Run { start: cursor, len });
        cursor += len;
        prev_bar = Some(bar);
    }

    let mut in_stable = vec![false; num_pages as usize];
    for run in &runs {
        for p in run.pages() {
            in_stable[p as usize] = true;
        }
    }

    runs.shuffle(&mut rng);
    let order = runs.iter().flat_map(|r| r.pages()).collect();

    let mut pool_runs: Vec<Run> = Vec::new();
    let mut p = 1u64;
    while p < num_pages {
        if in_stable[p as usize] {
            p += 1;
            continue;
        }
        let end = (p..num_pages).find(|&q| in_stable[q as usize]).unwrap_or(num_pages);
        let mut start = p;
        for len in split_runs(&mut rng, end - p, profile.mean_run_length) {
            pool_runs.push(Run { start, len });
            start += len;
        }
        p = end;
    }
    pool_runs.shuffle(&mut rng);
    let unique_pool = pool_runs.iter().flat_map(|r| r.pages()).collect();

    Ok(Layout { profile: profile.name.clone(), num_pages, runs, order, unique_pool })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn profile(ws: u64, run: f64, f: f64) -> FunctionProfile {
        FunctionProfile {
            name: "t".into(),
            ws_pages: ws,
            infra_pages: 0,
            mean_run_length: run,
            unique_fraction: f,
            compute_us: 0,
            layout_seed: 9,
            stated: vec![],
        }
    }

    #[test]
    fn runs_are_disjoint_separated_and_skip_page_zero() {
        let layout = synthesize_layout(&profile(2048, 2.5, 0.03), 16384).unwrap();
        let mut sorted = layout.runs().to_vec();
        sorted.sort_by_key(|r| r.start);
        assert!(sorted[0].start >= 1);
        for w in sorted.windows(2) {
            assert!(w[0].start + w[0].len < w[1].start);
        }
        assert_eq!(layout.stable_len(), 2048 - 61);
        let stable: HashSet<u64> = layout.stable_order().iter().copied().collect();
        assert_eq!(stable.len() as u64, layout.stable_len());
        let pool: HashSet<u64> = layout.unique_pool().iter().copied().collect();
        assert!(pool.is_disjoint(&stable));
        assert!(!pool.contains(&0));
        assert_eq!(pool.len() + stable.len(), 16383);
    }

    #[test]
    fn deterministic_under_seed() {
        let p = profile(1500, 3.0, 0.1);
        assert_eq!(synthesize_layout(&p, 8192).unwrap(), synthesize_layout(&p, 8192).unwrap());
        let mut q = p.clone();
        q.layout_seed += 1;
        assert_ne!(synthesize_layout(&p, 8192).unwrap().stable_order(), synthesize_layout(&q, 8192).unwrap().stable_order());
    }

    #[test]
    fn singleton_runs() {
        let layout = synthesize_layout(&profile(500, 1.0, 0.0), 4096).unwrap();
        assert!(layout.runs().iter().all(|r| r.len == 1));
    }

    #[test]
    fn mean_run_length_near_target() {
        for &m in &[1.5, 2.5, 5.0] {
            let layout = synthesize_layout(&profile(4096, m, 0.0), 65536).unwrap();
            let got = layout.mean_run_length();
            assert!((got - m).abs() / m < 0.10, "target {m}, got {got}");
        }
    }

    #[test]
    fn tight_and_overfull() {
        // 10 singletons need 19 usable pages.
        let p = profile(10, 1.0, 0.0);
        assert!(synthesize_layout(&p, 20).is_ok());
        assert!(matches!(synthesize_layout(&p, 19), Err(WorkloadError::LayoutDoesNotFit { .. })));
        assert!(synthesize_layout(&profile(100, 2.0, 0.0), 50).is_err());
    }
}
