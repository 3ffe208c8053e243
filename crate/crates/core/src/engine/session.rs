use std::collections::HashMap;

use super::{
    Breakdown, Component, EngineError, EngineParams, InstallPolicy, PrefetchPlan, PrefetchSource, Residency,
    RestoreMode, RestoreReport, Result,
};
use crate::disk::{ReadClass, StorageModel, MIB};
use crate::snapshot::{build_working_set, PageTrace, SnapshotError, SnapshotImage, WorkingSetFile};
use crate::workload::{AccessKind, AccessSequence, Phase};

/// Recorded artifacts handed to a prefetch session.
#[derive(Debug, Clone, Copy)]
pub struct Artifacts<'a> {
    pub trace: &'a PageTrace,
    pub ws: Option<&'a WorkingSetFile>,
    pub plan: PrefetchPlan,
}

impl<'a> Artifacts<'a> {
    pub fn reap(trace: &'a PageTrace, ws: &'a WorkingSetFile) -> Self {
        Artifacts { trace, ws: Some(ws), plan: PrefetchPlan::REAP }
    }
}

/// One unit of session work, replayable against a shared disk.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Step {
    Cpu { us: f64, component: Component },
    Read { class: ReadClass, bytes: u64, component: Component },
    /// `count` equal reads issued `width` at a time; each wave waits for
    /// all of its reads.
    Batch { class: ReadClass, bytes: u64, count: u64, width: u32, component: Component },
}

impl Step {
    pub fn component(&self) -> Component {
        match *self {
            Step::Cpu { component, .. } | Step::Read { component, .. } | Step::Batch { component, .. } => component,
        }
    }

    /// Duration with no competing sessions.
    pub fn solo_duration(&self, storage: &StorageModel) -> f64 {
        match *self {
            Step::Cpu { us, .. } => us,
            Step::Read { class, bytes, .. } => storage.request_duration(class, bytes, 1),
            Step::Batch { class, bytes, count, width, .. } => {
                let width = width.max(1) as u64;
                let full = count / width;
                let rest = count % width;
                let mut t = full as f64 * storage.request_duration(class, bytes, width as u32);
                if rest > 0 {
                    t += storage.request_duration(class, bytes, rest as u32);
                }
                t
            }
        }
    }
}

/// State of one restoring instance, owned by a single monitor.
#[derive(Debug)]
pub struct RestoreSession<'a> {
    image: &'a SnapshotImage,
    mode: RestoreMode,
    storage: &'a StorageModel,
    params: EngineParams,
    artifacts: Option<Artifacts<'a>>,
    residency: Residency,
    fetched: Residency,
    touched: Residency,
    dirty: Residency,
    calibrated: bool,
    accessed: bool,
    finished: bool,
    fault_log: Vec<u64>,
    faults_served: u64,
    buffered_faults: u64,
    storage_faults: u64,
    clock: f64,
    breakdown: Breakdown,
    forwarding_us: f64,
    steps: Vec<Step>,
    memory: HashMap<u64, Vec<u8>>,
    trace_pos: HashMap<u64, usize>,
    report: Option<RestoreReport>,
}

pub fn start_session<'a>(
    image: &'a SnapshotImage,
    mode: RestoreMode,
    storage: &'a StorageModel,
    params: EngineParams,
    artifacts: Option<Artifacts<'a>>,
) -> Result<RestoreSession<'a>> {
    params.validate()?;
    match (mode, &artifacts) {
        (RestoreMode::Prefetch, None) => return Err(EngineError::MissingArtifacts(mode, "")),
        (RestoreMode::LazyBaseline | RestoreMode::Record, Some(_)) => return Err(EngineError::UnexpectedArtifacts(mode)),
        _ => {}
    }
    if let Some(a) = &artifacts {
        if let Some(id) = a.trace.image_id() {
            if id != image.id() {
                return Err(SnapshotError::ImageMismatch { trace: id, image: image.id() }.into());
            }
        }
        a.trace.check_against(image)?;
        if a.plan.source == PrefetchSource::WsFile {
            let ws = a.ws.ok_or(EngineError::MissingArtifacts(mode, " and a working-set file"))?;
            if ws.trace().offsets() != a.trace.offsets() || ws.page_size() != a.trace.page_size() {
                return Err(EngineError::WsTraceMismatch);
            }
        }
    }

    let n = image.num_pages();
    let mut s = RestoreSession {
        image,
        mode,
        storage,
        params,
        artifacts,
        residency: Residency::new(n),
        fetched: Residency::new(n),
        touched: Residency::new(n),
        dirty: Residency::new(n),
        calibrated: false,
        accessed: false,
        finished: false,
        fault_log: Vec::new(),
        faults_served: 0,
        buffered_faults: 0,
        storage_faults: 0,
        clock: 0.0,
        breakdown: Breakdown::default(),
        forwarding_us: 0.0,
        steps: Vec::new(),
        memory: HashMap::new(),
        trace_pos: HashMap::new(),
        report: None,
    };

    if image.vmm_state_len() > 0 {
        s.charge(Step::Read { class: ReadClass::Bulk, bytes: image.vmm_state_len(), component: Component::LoadVmm });
    }
    s.charge(Step::Cpu { us: params.vmm_fixed_overhead_us, component: Component::LoadVmm });

    if let Some(a) = s.artifacts {
        s.prefetch(a)?;
    }
    Ok(s)
}

impl<'a> RestoreSession<'a> {
    fn charge(&mut self, step: Step) -> f64 {
        let d = step.solo_duration(self.storage);
        self.clock += d;
        self.breakdown.add(step.component(), d);
        match (step, self.steps.last_mut()) {
            (Step::Cpu { us: 0.0, .. }, _) => {}
            (Step::Cpu { us, component }, Some(Step::Cpu { us: prev, component: pc })) if *pc == component => *prev += us,
            _ => self.steps.push(step),
        }
        d
    }

    fn cpu(&mut self, us: f64, component: Component) -> f64 {
        self.charge(Step::Cpu { us, component })
    }

    fn prefetch(&mut self, a: Artifacts<'a>) -> Result<()> {
        let trace = a.trace;
        let page_size = trace.page_size() as u64;
        let class = ReadClass::Sized { bypass: a.plan.bypass };
        match a.plan.source {
            PrefetchSource::WsFile => {
                self.charge(Step::Read { class, bytes: trace.footprint_bytes(), component: Component::WsFetch });
            }
            PrefetchSource::GuestMemory { parallelism } => {
                if !trace.is_empty() {
                    self.charge(Step::Batch {
                        class,
                        bytes: page_size,
                        count: trace.len() as u64,
                        width: parallelism.max(1),
                        component: Component::WsFetch,
                    });
                }
            }
        }
        for page in trace.page_indices() {
            self.fetched.insert(page);
        }
        if a.plan.install == InstallPolicy::Eager {
            let us = trace.regions() as f64 * self.params.install_call_us + trace.len() as f64 * self.params.per_page_install_us;
            self.cpu(us, Component::WsInstall);
            for (i, page) in trace.page_indices().enumerate() {
                self.residency.insert(page);
                self.materialize_prefetched(page, i)?;
            }
        } else if self.params.materialize_pages {
            self.trace_pos = trace.page_indices().enumerate().map(|(i, p)| (p, i)).collect();
        }
        Ok(())
    }

    fn materialize_prefetched(&mut self, page: u64, index: usize) -> Result<()> {
        if !self.params.materialize_pages {
            return Ok(());
        }
        let bytes = match self.artifacts.and_then(|a| a.ws) {
            Some(ws) => ws.page(index).to_vec(),
            None => self.image.page(page)?,
        };
        self.memory.insert(page, bytes);
        Ok(())
    }

    fn materialize_from_image(&mut self, page: u64) -> Result<()> {
        if self.params.materialize_pages {
            let bytes = self.image.page(page)?;
            self.memory.insert(page, bytes);
        }
        Ok(())
    }

    fn check_page(&self, page: u64) -> Result<()> {
        let num_pages = self.image.num_pages();
        if page >= num_pages {
            return Err(EngineError::OutOfBounds { page, num_pages });
        }
        Ok(())
    }

    fn serve(&mut self, page: u64, kind: AccessKind, component: Component, workload: bool) -> Result<f64> {
        self.check_page(page)?;
        if workload {
            if page != 0 {
                self.touched.insert(page);
            }
            if kind == AccessKind::Write {
                self.dirty.insert(page);
            }
        }
        if self.residency.contains(page) {
            return Ok(self.cpu(self.params.resident_access_us, component));
        }
        let p = self.params;
        let latency = if self.fetched.contains(page) {
            if workload {
                self.buffered_faults += 1;
            }
            self.forwarding_us += p.fault_forwarding_us;
            let d = self.cpu(p.fault_forwarding_us + p.per_page_install_us, component);
            if self.params.materialize_pages {
                let index = self.trace_pos[&page];
                self.materialize_prefetched(page, index)?;
            }
            d
        } else {
            let read = Step::Read { class: ReadClass::Fault, bytes: self.image.page_size() as u64, component };
            let d = if self.mode == RestoreMode::LazyBaseline {
                self.charge(read)
            } else {
                self.forwarding_us += p.fault_forwarding_us;
                self.cpu(p.fault_forwarding_us, component) + self.charge(read) + self.cpu(p.per_page_install_us, component)
            };
            self.storage_faults += 1;
            if workload {
                self.faults_served += 1;
                if self.mode == RestoreMode::Record {
                    self.fault_log.push(page * self.image.page_size() as u64);
                }
            }
            self.materialize_from_image(page)?;
            d
        };
        self.residency.insert(page);
        Ok(latency)
    }

    /// Faults the first byte of guest memory so the monitor learns the base
    /// address. Page 0 becomes resident but is not part of the trace.
    pub fn calibrate_base(&mut self) -> Result<()> {
        if self.calibrated {
            return Err(EngineError::AlreadyCalibrated);
        }
        if self.accessed {
            return Err(EngineError::CalibrationAfterAccess);
        }
        if self.finished {
            return Err(EngineError::Finished);
        }
        self.serve(0, AccessKind::Read, Component::FaultService, false)?;
        self.calibrated = true;
        Ok(())
    }

    /// Serves one body-phase access and returns its latency in µs.
    pub fn access_page(&mut self, page: u64, kind: AccessKind) -> Result<f64> {
        self.access(page, kind, Phase::Body)
    }

    pub fn access(&mut self, page: u64, kind: AccessKind, phase: Phase) -> Result<f64> {
        if self.finished {
            return Err(EngineError::Finished);
        }
        if !self.calibrated {
            return Err(EngineError::NotCalibrated("a workload access"));
        }
        self.check_page(page)?;
        self.accessed = true;
        let component = match phase {
            Phase::Conn => Component::ConnectionRestore,
            Phase::Body => Component::FaultService,
        };
        self.serve(page, kind, component, true)
    }

    /// Replays `seq`, adds its compute time and finishes the session.
    pub fn run_invocation(&mut self, seq: &AccessSequence) -> Result<RestoreReport> {
        if self.finished {
            return Err(EngineError::Finished);
        }
        if !self.calibrated {
            return Err(EngineError::NotCalibrated("run_invocation"));
        }
        if let Some(page) = seq.max_page() {
            self.check_page(page)?;
        }
        for a in seq.accesses() {
            self.access(a.page, a.kind, a.phase)?;
        }
        self.cpu(seq.compute_us as f64, Component::Compute);
        self.finished = true;
        let report = self.build_report();
        self.report = Some(report.clone());
        Ok(report)
    }

    fn build_report(&self) -> RestoreReport {
        let b = self.breakdown;
        let page_size = self.image.page_size() as f64;
        let prefetched = self.fetched.count();
        let used = self.fetched.iter().filter(|&p| self.touched.contains(p)).count() as u64;
        let fetched_bytes = prefetched as f64 * page_size;
        let (bytes, window) = match self.artifacts.map(|a| a.plan.install) {
            Some(InstallPolicy::Eager) => (fetched_bytes, b.ws_fetch_us),
            Some(InstallPolicy::OnFault) => (fetched_bytes, b.ws_fetch_us + b.fault_service_us + b.connection_restore_us),
            None => (self.storage_faults as f64 * page_size, b.connection_restore_us + b.fault_service_us),
        };
        let bandwidth = if window > 0.0 { bytes / MIB / (window / 1e6) } else { 0.0 };
        RestoreReport {
            mode: self.mode,
            total_latency_us: b.total(),
            breakdown: b,
            faults_served: self.faults_served,
            buffered_faults: self.buffered_faults,
            prefetched_pages: prefetched,
            prefetched_unused: prefetched - used,
            pages_touched: self.touched.count(),
            forwarding_us: self.forwarding_us,
            effective_read_bandwidth_mbps: bandwidth,
        }
    }

    pub fn mode(&self) -> RestoreMode {
        self.mode
    }

    pub fn image(&self) -> &'a SnapshotImage {
        self.image
    }

    pub fn clock_us(&self) -> f64 {
        self.clock
    }

    pub fn breakdown(&self) -> &Breakdown {
        &self.breakdown
    }

    pub fn is_calibrated(&self) -> bool {
        self.calibrated
    }

    pub fn is_finished(&self) -> bool {
        self.finished
    }

    pub fn residency(&self) -> &Residency {
        &self.residency
    }

    pub fn dirty_pages(&self) -> &Residency {
        &self.dirty
    }

    /// Byte offsets of recorded faults, in fault order.
    pub fn fault_log(&self) -> &[u64] {
        &self.fault_log
    }

    pub fn faults_served(&self) -> u64 {
        self.faults_served
    }

    pub fn steps(&self) -> &[Step] {
        &self.steps
    }

    pub fn into_steps(self) -> Vec<Step> {
        self.steps
    }

    /// Instance-private copy of a resident page, when pages are materialized.
    pub fn page_bytes(&self, page: u64) -> Option<&[u8]> {
        self.memory.get(&page).map(Vec::as_slice)
    }

    pub fn report(&self) -> Option<&RestoreReport> {
        self.report.as_ref()
    }
}

/// Turns a finished record session into its trace and working-set file.
pub fn finalize_record(session: &RestoreSession<'_>) -> Result<(PageTrace, WorkingSetFile)> {
    if session.mode != RestoreMode::Record {
        return Err(EngineError::NotRecord(session.mode));
    }
    if !session.finished {
        return Err(EngineError::NotFinished);
    }
    let trace = PageTrace::new(session.image.page_size(), session.fault_log.clone())?.with_image_id(session.image.id());
    let ws = build_working_set(session.image, &trace)?;
    Ok((trace, ws))
}

/// Starts a session, calibrates it and runs one invocation.
pub fn restore<'a>(
    image: &'a SnapshotImage,
    mode: RestoreMode,
    storage: &'a StorageModel,
    params: EngineParams,
    artifacts: Option<Artifacts<'a>>,
    seq: &AccessSequence,
) -> Result<(RestoreReport, RestoreSession<'a>)> {
    let mut session = start_session(image, mode, storage, params, artifacts)?;
    session.calibrate_base()?;
    let report = session.run_invocation(seq)?;
    Ok((report, session))
}
