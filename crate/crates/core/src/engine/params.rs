use serde::{Deserialize, Serialize};

use super::{EngineError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RestoreMode {
    LazyBaseline,
    Record,
    Prefetch,
}

impl RestoreMode {
    pub fn as_str(self) -> &'static str {
        match self {
            RestoreMode::LazyBaseline => "lazy",
            RestoreMode::Record => "record",
            RestoreMode::Prefetch => "prefetch",
        }
    }
}

impl std::fmt::Display for RestoreMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for RestoreMode {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "lazy" | "baseline" => Ok(RestoreMode::LazyBaseline),
            "record" => Ok(RestoreMode::Record),
            "prefetch" | "reap" => Ok(RestoreMode::Prefetch),
            _ => Err(format!("unknown mode {s:?} (expected lazy, record or prefetch)")),
        }
    }
}

/// Where prefetched pages are read from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PrefetchSource {
    /// One read of the compacted working-set file.
    WsFile,
    /// Page-sized reads of the traced offsets straight from guest memory,
    /// `parallelism` in flight.
    GuestMemory { parallelism: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum InstallPolicy {
    /// Install every fetched page before the workload runs.
    Eager,
    /// Keep fetched pages buffered and install each on its first fault.
    OnFault,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrefetchPlan {
    pub source: PrefetchSource,
    pub bypass: bool,
    pub install: InstallPolicy,
}

impl PrefetchPlan {
    pub const REAP: PrefetchPlan = PrefetchPlan { source: PrefetchSource::WsFile, bypass: true, install: InstallPolicy::Eager };
}

impl Default for PrefetchPlan {
    fn default() -> Self {
        Self::REAP
    }
}

/// Fixed costs of the restore path, in µs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EngineParams {
    pub vmm_fixed_overhead_us: f64,
    /// Handing a fault to the user-level monitor and back.
    pub fault_forwarding_us: f64,
    pub per_page_install_us: f64,
    /// One install call covering a contiguous region.
    pub install_call_us: f64,
    pub resident_access_us: f64,
    /// Copy page bytes into instance memory. Timing does not depend on it.
    pub materialize_pages: bool,
}

impl Default for EngineParams {
    fn default() -> Self {
        EngineParams {
            vmm_fixed_overhead_us: 45_000.0,
            fault_forwarding_us: 25.0,
            per_page_install_us: 1.0,
            install_call_us: 5.0,
            resident_access_us: 0.0,
            materialize_pages: true,
        }
    }
}

impl EngineParams {
    pub fn validate(&self) -> Result<()> {
        for (field, value) in [
            ("vmm_fixed_overhead_us", self.vmm_fixed_overhead_us),
            ("fault_forwarding_us", self.fault_forwarding_us),
            ("per_page_install_us", self.per_page_install_us),
            ("install_call_us", self.install_call_us),
            ("resident_access_us", self.resident_access_us),
        ] {
            if !(value.is_finite() && value >= 0.0) {
                return Err(EngineError::InvalidParam { field, value });
            }
        }
        Ok(())
    }
}
