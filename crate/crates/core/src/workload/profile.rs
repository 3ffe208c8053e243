use serde::{Deserialize, Serialize};

use super::WorkloadError;

/// Memory behaviour of one serverless function.
///
/// `ws_pages` is the per-invocation working set: the stable pages shared by
/// every invocation plus `unique_pages()` input-dependent pages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionProfile {
    pub name: String,
    pub ws_pages: u64,
    /// Connection/infrastructure pages, touched first; a subset of the
    /// stable set.
    pub infra_pages: u64,
    pub mean_run_length: f64,
    pub unique_fraction: f64,
    pub compute_us: u64,
    pub layout_seed: u64,
    /// Parameters taken directly from published measurements; everything
    /// else is an approximation within the published ranges.
    #[serde(default)]
    pub stated: Vec<String>,
}

impl FunctionProfile {
    pub fn unique_pages(&self) -> u64 {
        (self.ws_pages as f64 * self.unique_fraction).floor() as u64
    }

    pub fn stable_pages(&self) -> u64 {
        self.ws_pages - self.unique_pages()
    }

    pub fn validate(&self) -> Result<(), WorkloadError> {
        let bad = |msg: String| Err(WorkloadError::InvalidProfile { name: self.name.clone(), msg });
        if self.name.is_empty() {
            return bad("empty name".into());
        }
        if !(0.0..=1.0).contains(&self.unique_fraction) {
            return bad(format!("unique_fraction {} outside [0, 1]", self.unique_fraction));
        }
        if !(self.mean_run_length.is_finite() && self.mean_run_length >= 1.0) {
            return bad(format!("mean_run_length {} must be >= 1", self.mean_run_length));
        }
        if self.infra_pages > self.ws_pages {
            return bad(format!("infra_pages {} exceeds ws_pages {}", self.infra_pages, self.ws_pages));
        }
        if self.infra_pages > self.stable_pages() {
            return bad(format!(
                "infra_pages {} exceeds the {} stable pages left after uniques",
                self.infra_pages,
                self.stable_pages()
            ));
        }
        Ok(())
    }

    pub fn ws_bytes(&self, page_size: u32) -> u64 {
        self.ws_pages * page_size as u64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn profile() -> FunctionProfile {
        FunctionProfile {
            name: "f".into(),
            ws_pages: 2048,
            infra_pages: 1000,
            mean_run_length: 2.5,
            unique_fraction: 0.03,
            compute_us: 1000,
            layout_seed: 1,
            stated: vec![],
        }
    }

    #[test]
    fn unique_split() {
        let p = profile();
        assert_eq!(p.unique_pages(), 61);
        assert_eq!(p.stable_pages(), 1987);
        p.validate().unwrap();
    }

    #[test]
    fn invalid_fields() {
        for bad in [
            FunctionProfile { unique_fraction: 1.5, ..profile() },
            FunctionProfile { unique_fraction: -0.1, ..profile() },
            FunctionProfile { mean_run_length: 0.5, ..profile() },
            FunctionProfile { infra_pages: 3000, ..profile() },
            FunctionProfile { infra_pages: 2000, ..profile() },
            FunctionProfile { name: String::new(), ..profile() },
        ] {
            assert!(bad.validate().is_err(), "{bad:?}");
        }
    }
}
