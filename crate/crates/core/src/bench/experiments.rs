use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::{BenchError, ExperimentConfig, Result};
use crate::analysis::{contiguity_of_pages, footprint_mb, render_results_csv, reuse_of_pages, ResultRow};
use crate::disk::{measure_real, AccessPattern, CalibrationPoint, DiskError, StorageModel, MIB};
use crate::engine::{
    finalize_record, restore, run_concurrent, Artifacts, EngineParams, InstallPolicy, PrefetchPlan, PrefetchSource,
    RestoreMode, RestoreReport,
};
use crate::snapshot::{create_synthetic_image, validate_working_set, PageTrace, SnapshotImage, WorkingSetFile};
use crate::workload::{derive_invocation, import_trace, synthesize_layout, AccessSequence, FunctionProfile, Layout, PresetTable};

const TRACE_FILE: &str = "trace.bin";
const WS_FILE: &str = "ws.bin";

fn io(path: &Path) -> impl Fn(std::io::Error) -> BenchError + '_ {
    move |source| BenchError::Io { path: path.to_path_buf(), source }
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(io(parent))?;
    }
    fs::write(path, contents).map_err(io(path))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("outputs serialize");
    text.push('\n');
    write_file(path, text)
}

fn render_csv<T: Serialize>(rows: &[T]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row).expect("rows serialize");
    }
    String::from_utf8(w.into_inner().expect("in-memory writer")).expect("utf-8")
}

/// Everything an experiment needs: config, image, storage model and presets.
#[derive(Debug)]
pub struct Bench {
    pub config: ExperimentConfig,
    pub image: SnapshotImage,
    pub storage: StorageModel,
    pub table: PresetTable,
}

fn ensure_image(config: &ExperimentConfig) -> Result<SnapshotImage> {
    let dir = config.image_dir();
    if !dir.join(crate::snapshot::META_FILE).is_file() {
        return Ok(create_synthetic_image(&dir, config.num_pages, config.page_size, config.content_seed, config.vmm_state_bytes)?);
    }
    let image = SnapshotImage::open(&dir)?;
    let same = image.num_pages() == config.num_pages
        && image.page_size() == config.page_size
        && image.content_seed() == config.content_seed
        && image.vmm_state_len() == config.vmm_state_bytes;
    if !same {
        return Err(BenchError::Config {
            field: "image_dir".into(),
            msg: format!("existing image in {} does not match num_pages/page_size/content_seed/vmm_state_bytes", dir.display()),
        });
    }
    Ok(image)
}

impl Bench {
    pub fn open(config: ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let storage = match &config.calibration {
            Some(path) => StorageModel::load_calibration(path)?,
            None => StorageModel::default(),
        };
        let table = match &config.presets {
            Some(path) => PresetTable::load(path)?,
            None => PresetTable::builtin(),
        };
        for name in &config.profiles {
            table.get(name)?;
        }
        let image = ensure_image(&config)?;
        Ok(Bench { config, image, storage, table })
    }

    pub fn profile(&self, name: &str) -> Result<FunctionProfile> {
        Ok(self.table.get(name)?.clone())
    }

    /// Profiles named in the config, or the whole table.
    pub fn selected_profiles(&self) -> Vec<FunctionProfile> {
        if self.config.profiles.is_empty() {
            return self.table.profiles().to_vec();
        }
        self.config.profiles.iter().map(|n| self.table.get(n).expect("checked in open").clone()).collect()
    }

    pub fn layout(&self, profile: &FunctionProfile) -> Result<Layout> {
        Ok(synthesize_layout(profile, self.image.num_pages())?)
    }

    /// Input seed of the recording invocation.
    pub fn record_seed(&self) -> u64 {
        self.config.seed
    }

    /// Input seed of measured cold invocations.
    pub fn measure_seed(&self) -> u64 {
        self.config.seed + 1
    }

    pub fn run_dir(&self, mode: &str, function: &str) -> PathBuf {
        self.config.out.join(mode).join(function)
    }

    fn params(&self) -> EngineParams {
        self.config.params
    }

    /// Previously recorded trace and WS file for `function`, if present.
    pub fn load_artifacts(&self, function: &str) -> Result<Option<(PageTrace, WorkingSetFile)>> {
        let dir = self.run_dir("record", function);
        let (tp, wp) = (dir.join(TRACE_FILE), dir.join(WS_FILE));
        if !tp.is_file() || !wp.is_file() {
            return Ok(None);
        }
        let trace = PageTrace::read_expecting(&tp, self.image.page_size())?.bind(&self.image)?;
        let ws = WorkingSetFile::read(&wp, trace.clone())?;
        if let Some(i) = validate_working_set(&self.image, &trace, &ws)?.first_mismatch_index() {
            return Err(BenchError::Snapshot(crate::snapshot::SnapshotError::Meta(format!(
                "{}: page {i} does not match the guest image",
                wp.display()
            ))));
        }
        Ok(Some((trace, ws)))
    }

    /// Recorded artifacts, recording first when none exist.
    pub fn artifacts(&self, function: &str) -> Result<(PageTrace, WorkingSetFile, Option<RecordOutcome>)> {
        if let Some((trace, ws)) = self.load_artifacts(function)? {
            return Ok((trace, ws, None));
        }
        let rec = cmd_record(self, function)?;
        Ok((rec.trace.clone(), rec.ws.clone(), Some(rec)))
    }
}

pub fn cmd_snapshot_create(config: &ExperimentConfig) -> Result<SnapshotImage> {
    config.validate()?;
    Ok(create_synthetic_image(config.image_dir(), config.num_pages, config.page_size, config.content_seed, config.vmm_state_bytes)?)
}

#[derive(Debug, Clone, Serialize)]
pub struct RecordOutcome {
    pub function: String,
    pub report: RestoreReport,
    /// Lazy baseline on the same invocation.
    pub lazy: RestoreReport,
    /// `report.total / lazy.total - 1`
    pub overhead: f64,
    pub trace_pages: usize,
    #[serde(skip)]
    pub trace: PageTrace,
    #[serde(skip)]
    pub ws: WorkingSetFile,
}

/// Runs the record phase for `function` and persists its trace and WS file.
pub fn cmd_record(bench: &Bench, function: &str) -> Result<RecordOutcome> {
    let profile = bench.profile(function)?;
    let layout = bench.layout(&profile)?;
    let seq = derive_invocation(&profile, &layout, bench.record_seed())?;
    let (report, session) = restore(&bench.image, RestoreMode::Record, &bench.storage, bench.params(), None, &seq)?;
    let (trace, ws) = finalize_record(&session)?;
    let (lazy, _) = restore(&bench.image, RestoreMode::LazyBaseline, &bench.storage, bench.params(), None, &seq)?;
    let outcome = RecordOutcome {
        function: function.to_string(),
        overhead: report.total_latency_us / lazy.total_latency_us - 1.0,
        report,
        lazy,
        trace_pages: trace.len(),
        trace,
        ws,
    };
    let dir = bench.run_dir("record", function);
    fs::create_dir_all(&dir).map_err(io(&dir))?;
    outcome.trace.write(dir.join(TRACE_FILE))?;
    outcome.ws.write(dir.join(WS_FILE))?;
    write_json(&dir.join("report.json"), &outcome)?;
    Ok(outcome)
}

#[derive(Debug, Clone, Serialize)]
pub struct ColdstartOutcome {
    pub function: String,
    pub mode: RestoreMode,
    pub reports: Vec<RestoreReport>,
    pub mean_us: f64,
    pub min_us: f64,
    pub max_us: f64,
    /// Set when this run had to record first.
    pub record: Option<RecordOutcome>,
}

impl ColdstartOutcome {
    pub fn rows(&self) -> Vec<ResultRow> {
        self.reports.iter().map(|r| ResultRow::new(&self.function, r)).collect()
    }
}

/// `repeats` cold invocations of `function`, each from an empty residency
/// map.
pub fn cmd_coldstart(bench: &Bench, function: &str, mode: RestoreMode, repeats: u32) -> Result<ColdstartOutcome> {
    if repeats == 0 {
        return Err(BenchError::Config { field: "repeats".into(), msg: "must be at least 1".into() });
    }
    let profile = bench.profile(function)?;
    let layout = bench.layout(&profile)?;
    let params = bench.params();
    let mut record = None;
    let mut reports = Vec::with_capacity(repeats as usize);
    match mode {
        RestoreMode::LazyBaseline => {
            let seq = derive_invocation(&profile, &layout, bench.measure_seed())?;
            for _ in 0..repeats {
                reports.push(restore(&bench.image, mode, &bench.storage, params, None, &seq)?.0);
            }
        }
        RestoreMode::Record => {
            let rec = cmd_record(bench, function)?;
            let seq = derive_invocation(&profile, &layout, bench.record_seed())?;
            reports.push(rec.report.clone());
            for _ in 1..repeats {
                reports.push(restore(&bench.image, mode, &bench.storage, params, None, &seq)?.0);
            }
            record = Some(rec);
        }
        RestoreMode::Prefetch => {
            let (trace, ws, rec) = bench.artifacts(function)?;
            record = rec;
            let seq = derive_invocation(&profile, &layout, bench.measure_seed())?;
            for _ in 0..repeats {
                let art = Artifacts::reap(&trace, &ws);
                reports.push(restore(&bench.image, mode, &bench.storage, params, Some(art), &seq)?.0);
            }
        }
    }
    let totals = reports.iter().map(|r| r.total_latency_us);
    let outcome = ColdstartOutcome {
        function: function.to_string(),
        mode,
        mean_us: totals.clone().sum::<f64>() / reports.len() as f64,
        min_us: totals.clone().fold(f64::INFINITY, f64::min),
        max_us: totals.fold(0.0, f64::max),
        reports,
        record,
    };
    let dir = bench.run_dir(mode.as_str(), function);
    write_json(&dir.join("reports.json"), &outcome)?;
    write_file(&dir.join("results.csv"), render_results_csv(&outcome.rows())?)?;
    Ok(outcome)
}

pub const OPT_STEP_NAMES: [&str; 4] = ["vanilla", "parallel-pfs", "ws-file", "reap"];

#[derive(Debug, Clone, Serialize)]
pub struct OptStepRow {
    pub step: String,
    pub report: RestoreReport,
}

#[derive(Debug, Clone, Serialize)]
pub struct OptSteps {
    pub function: String,
    pub rows: Vec<OptStepRow>,
}

#[derive(Serialize)]
struct OptCsvRow<'a> {
    step: &'a str,
    total_us: f64,
    processing_us: f64,
    load_vmm_us: f64,
    conn_us: f64,
    fetch_us: f64,
    install_us: f64,
    fault_us: f64,
    compute_us: f64,
    faults: u64,
    buffered_faults: u64,
    bandwidth_mbps: f64,
}

impl OptSteps {
    pub fn row(&self, step: &str) -> Option<&RestoreReport> {
        self.rows.iter().find(|r| r.step == step).map(|r| &r.report)
    }

    pub fn render_csv(&self) -> String {
        let rows: Vec<OptCsvRow> = self
            .rows
            .iter()
            .map(|r| {
                let (rep, b) = (&r.report, &r.report.breakdown);
                OptCsvRow {
                    step: &r.step,
                    total_us: rep.total_latency_us,
                    processing_us: rep.processing_us(),
                    load_vmm_us: b.load_vmm_us,
                    conn_us: b.connection_restore_us,
                    fetch_us: b.ws_fetch_us,
                    install_us: b.ws_install_us,
                    fault_us: b.fault_service_us,
                    compute_us: b.compute_us,
                    faults: rep.faults_served,
                    buffered_faults: rep.buffered_faults,
                    bandwidth_mbps: rep.effective_read_bandwidth_mbps,
                }
            })
            .collect();
        render_csv(&rows)
    }
}

/// The four-step ablation: serial lazy paging, parallel page reads from
/// guest memory, one cached WS-file read, one cache-bypassing WS-file read.
pub fn cmd_opt_steps(bench: &Bench, function: &str) -> Result<OptSteps> {
    let profile = bench.profile(function)?;
    let layout = bench.layout(&profile)?;
    let (trace, ws, _) = bench.artifacts(function)?;
    let seq = derive_invocation(&profile, &layout, bench.measure_seed())?;
    let plans = [
        None,
        Some(PrefetchPlan { source: PrefetchSource::GuestMemory { parallelism: 16 }, bypass: false, install: InstallPolicy::OnFault }),
        Some(PrefetchPlan { source: PrefetchSource::WsFile, bypass: false, install: InstallPolicy::Eager }),
        Some(PrefetchPlan::REAP),
    ];
    let mut rows = Vec::new();
    for (name, plan) in OPT_STEP_NAMES.iter().zip(plans) {
        let (mode, art) = match plan {
            None => (RestoreMode::LazyBaseline, None),
            Some(plan) => (RestoreMode::Prefetch, Some(Artifacts { trace: &trace, ws: Some(&ws), plan })),
        };
        let (report, _) = restore(&bench.image, mode, &bench.storage, bench.params(), art, &seq)?;
        rows.push(OptStepRow { step: name.to_string(), report });
    }
    let out = OptSteps { function: function.to_string(), rows };
    let dir = bench.run_dir("opt-steps", function);
    write_file(&dir.join("opt_steps.csv"), out.render_csv())?;
    write_json(&dir.join("opt_steps.json"), &out)?;
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    pub mode: String,
    pub concurrency: u32,
    pub mean_latency_us: f64,
    pub min_latency_us: f64,
    pub max_latency_us: f64,
    /// Working-set bytes of all instances over the mean latency.
    pub aggregate_mbps: f64,
    /// Bytes the disk served over the makespan.
    pub disk_mbps: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Sweep {
    pub function: String,
    pub points: Vec<SweepPoint>,
}

impl Sweep {
    pub fn curve(&self, mode: RestoreMode) -> Vec<&SweepPoint> {
        self.points.iter().filter(|p| p.mode == mode.as_str()).collect()
    }

    pub fn render_csv(&self) -> String {
        render_csv(&self.points)
    }
}

/// `k` simultaneous cold starts per count, lazy and prefetch, sharing one
/// disk. Instance `i` serves input seed `measure_seed + i`.
pub fn cmd_sweep_concurrency(bench: &Bench, function: &str, counts: &[u32]) -> Result<Sweep> {
    if counts.is_empty() || counts.contains(&0) {
        return Err(BenchError::Config { field: "concurrency".into(), msg: "counts must be at least 1".into() });
    }
    let profile = bench.profile(function)?;
    let layout = bench.layout(&profile)?;
    let (trace, ws, _) = bench.artifacts(function)?;
    let params = EngineParams { materialize_pages: false, ..bench.params() };
    let max_k = *counts.iter().max().unwrap();
    let seqs: Vec<AccessSequence> = (0..max_k as u64)
        .map(|i| derive_invocation(&profile, &layout, bench.measure_seed() + i))
        .collect::<std::result::Result<_, _>>()?;
    let ws_bytes = profile.ws_bytes(bench.image.page_size()) as f64;
    let mut points = Vec::new();
    for mode in [RestoreMode::LazyBaseline, RestoreMode::Prefetch] {
        let mut steps = Vec::with_capacity(max_k as usize);
        for seq in &seqs {
            let art = (mode == RestoreMode::Prefetch).then(|| Artifacts::reap(&trace, &ws));
            steps.push(restore(&bench.image, mode, &bench.storage, params, art, seq)?.1.into_steps());
        }
        for &k in counts {
            let run = run_concurrent(&bench.storage, &steps[..k as usize]);
            let finish: Vec<f64> = run.sessions.iter().map(|s| s.finish_us).collect();
            let mean = finish.iter().sum::<f64>() / k as f64;
            points.push(SweepPoint {
                mode: mode.as_str().to_string(),
                concurrency: k,
                mean_latency_us: mean,
                min_latency_us: finish.iter().copied().fold(f64::INFINITY, f64::min),
                max_latency_us: finish.iter().copied().fold(0.0, f64::max),
                aggregate_mbps: k as f64 * ws_bytes / MIB / (mean / 1e6),
                disk_mbps: run.bytes_served / MIB / (run.makespan_us / 1e6),
            });
        }
    }
    let out = Sweep { function: function.to_string(), points };
    let dir = bench.run_dir("sweep", function);
    write_file(&dir.join("sweep.csv"), out.render_csv())?;
    write_json(&dir.join("sweep.json"), &out)?;
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FileMetrics {
    pub path: String,
    pub pages: u64,
    pub footprint_mb: f64,
    pub run_count: u64,
    pub mean_run_length: Option<f64>,
    pub max_run_length: u64,
}

/// Reuse of `other` relative to `base`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReuseRow {
    pub base: String,
    pub other: String,
    pub same: u64,
    pub unique_base: u64,
    pub unique_other: u64,
    pub reuse_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalyzeOutcome {
    pub files: Vec<FileMetrics>,
    pub reuse: Vec<ReuseRow>,
}

impl AnalyzeOutcome {
    pub fn files_csv(&self) -> String {
        render_csv(&self.files)
    }

    pub fn reuse_csv(&self) -> String {
        render_csv(&self.reuse)
    }
}

/// Contiguity and footprint of every input, and reuse of each later input
/// relative to the first.
pub fn cmd_analyze(paths: &[PathBuf], page_size: u32) -> Result<AnalyzeOutcome> {
    if paths.is_empty() {
        return Err(BenchError::Usage("analyze needs at least one trace or sequence file".into()));
    }
    let mut sets: Vec<HashSet<u64>> = Vec::new();
    let mut files = Vec::new();
    for path in paths {
        let seq = import_trace(path, page_size)?;
        let pages = seq.first_touch_order();
        let c = contiguity_of_pages(pages.iter().copied());
        files.push(FileMetrics {
            path: path.display().to_string(),
            pages: pages.len() as u64,
            footprint_mb: footprint_mb(pages.len() as u64, page_size),
            run_count: c.run_count,
            mean_run_length: c.mean_run_length,
            max_run_length: c.max_run_length,
        });
        sets.push(pages.into_iter().collect());
    }
    let reuse = (1..sets.len())
        .map(|i| {
            let r = reuse_of_pages(&sets[0], &sets[i]);
            ReuseRow {
                base: files[0].path.clone(),
                other: files[i].path.clone(),
                same: r.same,
                unique_base: r.unique_a,
                unique_other: r.unique_b,
                reuse_fraction: r.reuse_fraction,
            }
        })
        .collect();
    Ok(AnalyzeOutcome { files, reuse })
}

/// Pattern name and measured MB/s, `None` when unsupported.
pub type ProbeResult = (String, Option<f64>);

/// Probes a real file and returns a calibration table built from the
/// measurements, plus per-pattern results.
pub fn cmd_measure_disk(path: &Path) -> Result<(String, Vec<ProbeResult>)> {
    let patterns = [
        (AccessPattern::Serial4K, 4096u64, 1u32, false),
        (AccessPattern::Parallel4K(16), 4096, 16, false),
        (AccessPattern::Bulk, 8 << 20, 1, false),
        (AccessPattern::BulkBypass, 8 << 20, 1, true),
    ];
    let mut points = Vec::new();
    let mut measured = Vec::new();
    for (pattern, size_bytes, concurrency, bypass) in patterns {
        match measure_real(path, pattern) {
            Ok(mbps) => {
                points.push(CalibrationPoint { size_bytes, concurrency, bypass, mbps });
                measured.push((pattern.to_string(), Some(mbps)));
            }
            Err(DiskError::Unsupported(_)) => measured.push((pattern.to_string(), None)),
            Err(e) => return Err(e.into()),
        }
    }
    let peak = points.iter().map(|p| p.mbps).fold(0.0, f64::max);
    let model = StorageModel::new(points, peak, 0.0, None)?;
    Ok((model.render_calibration(), measured))
}
