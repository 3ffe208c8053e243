use serde::{Deserialize, Serialize};

use super::RestoreMode;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Component {
    LoadVmm,
    ConnectionRestore,
    WsFetch,
    WsInstall,
    FaultService,
    Compute,
}

impl Component {
    pub const ALL: [Component; 6] = [
        Component::LoadVmm,
        Component::ConnectionRestore,
        Component::WsFetch,
        Component::WsInstall,
        Component::FaultService,
        Component::Compute,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Component::LoadVmm => "load_vmm",
            Component::ConnectionRestore => "connection_restore",
            Component::WsFetch => "ws_fetch",
            Component::WsInstall => "ws_install",
            Component::FaultService => "fault_service",
            Component::Compute => "compute",
        }
    }
}

/// Latency components in µs.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Breakdown {
    pub load_vmm_us: f64,
    pub connection_restore_us: f64,
    pub ws_fetch_us: f64,
    pub ws_install_us: f64,
    pub fault_service_us: f64,
    pub compute_us: f64,
}

impl Breakdown {
    pub fn get(&self, c: Component) -> f64 {
        match c {
            Component::LoadVmm => self.load_vmm_us,
            Component::ConnectionRestore => self.connection_restore_us,
            Component::WsFetch => self.ws_fetch_us,
            Component::WsInstall => self.ws_install_us,
            Component::FaultService => self.fault_service_us,
            Component::Compute => self.compute_us,
        }
    }

    pub fn add(&mut self, c: Component, us: f64) {
        let slot = match c {
            Component::LoadVmm => &mut self.load_vmm_us,
            Component::ConnectionRestore => &mut self.connection_restore_us,
            Component::WsFetch => &mut self.ws_fetch_us,
            Component::WsInstall => &mut self.ws_install_us,
            Component::FaultService => &mut self.fault_service_us,
            Component::Compute => &mut self.compute_us,
        };
        *slot += us;
    }

    pub fn total(&self) -> f64 {
        Component::ALL.iter().map(|&c| self.get(c)).sum()
    }
}

/// Outcome of one cold invocation. Serializes as a flat JSON object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestoreReport {
    pub mode: RestoreMode,
    pub total_latency_us: f64,
    #[serde(flatten)]
    pub breakdown: Breakdown,
    /// Faults that went to storage, excluding the calibration fault.
    pub faults_served: u64,
    /// Faults on pages already fetched but not yet installed.
    pub buffered_faults: u64,
    pub prefetched_pages: u64,
    pub prefetched_unused: u64,
    /// Distinct workload pages, page 0 excluded.
    pub pages_touched: u64,
    pub forwarding_us: f64,
    pub effective_read_bandwidth_mbps: f64,
}

impl RestoreReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }

    /// Restore time spent outside VMM load and function computation.
    pub fn processing_us(&self) -> f64 {
        self.total_latency_us - self.breakdown.load_vmm_us - self.breakdown.compute_us
    }
}
