use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::AnalysisError;
use crate::engine::{RestoreMode, RestoreReport};

/// One line of `results.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub function: String,
    pub mode: String,
    pub total_us: f64,
    pub load_vmm_us: f64,
    pub conn_us: f64,
    pub fetch_us: f64,
    pub install_us: f64,
    pub fault_us: f64,
    pub compute_us: f64,
    pub faults: u64,
    pub prefetched: u64,
    pub mispredicted: u64,
}

impl ResultRow {
    pub fn new(function: &str, r: &RestoreReport) -> Self {
        let b = &r.breakdown;
        ResultRow {
            function: function.to_string(),
            mode: r.mode.as_str().to_string(),
            total_us: r.total_latency_us,
            load_vmm_us: b.load_vmm_us,
            conn_us: b.connection_restore_us,
            fetch_us: b.ws_fetch_us,
            install_us: b.ws_install_us,
            fault_us: b.fault_service_us,
            compute_us: b.compute_us,
            faults: r.faults_served,
            prefetched: r.prefetched_pages,
            mispredicted: r.prefetched_unused,
        }
    }
}

fn render_csv<T: Serialize>(rows: &[T]) -> Result<String, AnalysisError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row)?;
    }
    let bytes = w.into_inner().map_err(|e| AnalysisError::Csv(e.into_error().into()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

pub fn render_results_csv(rows: &[ResultRow]) -> Result<String, AnalysisError> {
    if rows.is_empty() {
        return Ok("function,mode,total_us,load_vmm_us,conn_us,fetch_us,install_us,fault_us,compute_us,faults,prefetched,mispredicted\n".into());
    }
    render_csv(rows)
}

pub fn write_results_csv(path: impl AsRef<Path>, rows: &[ResultRow]) -> Result<(), AnalysisError> {
    let path = path.as_ref();
    let text = render_results_csv(rows)?;
    std::fs::write(path, text).map_err(|source| AnalysisError::Io { path: path.to_path_buf(), source })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeedupRow {
    pub function: String,
    pub baseline_us: f64,
    pub prefetch_us: f64,
    pub speedup: f64,
    pub baseline_faults: u64,
    pub residual_faults: u64,
    pub fault_elimination: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeedupSummary {
    pub rows: Vec<SpeedupRow>,
    pub mean_speedup: f64,
    pub geomean_speedup: f64,
    pub mean_fault_elimination: f64,
}

impl SpeedupSummary {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("summary serializes")
    }
}

pub fn render_speedup_csv(summary: &SpeedupSummary) -> Result<String, AnalysisError> {
    render_csv(&summary.rows)
}

/// Pairs each function's lazy-baseline report with its prefetch report.
/// Rows come out in first-appearance order.
pub fn speedup_report(entries: &[(String, RestoreReport)]) -> Result<SpeedupSummary, AnalysisError> {
    let mut order: Vec<&str> = Vec::new();
    let mut pairs: BTreeMap<&str, (Option<&RestoreReport>, Option<&RestoreReport>)> = BTreeMap::new();
    for (function, report) in entries {
        let unpaired = |msg: &str| AnalysisError::Unpaired { function: function.clone(), msg: msg.into() };
        let slot = pairs.entry(function).or_insert_with(|| {
            order.push(function);
            (None, None)
        });
        let target = match report.mode {
            RestoreMode::LazyBaseline => &mut slot.0,
            RestoreMode::Prefetch => &mut slot.1,
            RestoreMode::Record => return Err(unpaired("record reports cannot be paired")),
        };
        if target.replace(report).is_some() {
            return Err(unpaired(&format!("duplicate {} report", report.mode)));
        }
    }
    if order.is_empty() {
        return Err(AnalysisError::Empty);
    }
    let mut rows = Vec::with_capacity(order.len());
    for function in order {
        let unpaired = |msg: &str| AnalysisError::Unpaired { function: function.to_string(), msg: msg.into() };
        let (base, pf) = match pairs[function] {
            (Some(b), Some(p)) => (b, p),
            (None, _) => return Err(unpaired("missing lazy baseline report")),
            (_, None) => return Err(unpaired("missing prefetch report")),
        };
        let elimination = if base.faults_served == 0 {
            1.0
        } else {
            1.0 - pf.faults_served as f64 / base.faults_served as f64
        };
        rows.push(SpeedupRow {
            function: function.to_string(),
            baseline_us: base.total_latency_us,
            prefetch_us: pf.total_latency_us,
            speedup: base.total_latency_us / pf.total_latency_us,
            baseline_faults: base.faults_served,
            residual_faults: pf.faults_served,
            fault_elimination: elimination,
        });
    }
    let n = rows.len() as f64;
    Ok(SpeedupSummary {
        mean_speedup: rows.iter().map(|r| r.speedup).sum::<f64>() / n,
        geomean_speedup: (rows.iter().map(|r| r.speedup.ln()).sum::<f64>() / n).exp(),
        mean_fault_elimination: rows.iter().map(|r| r.fault_elimination).sum::<f64>() / n,
        rows,
    })
}
