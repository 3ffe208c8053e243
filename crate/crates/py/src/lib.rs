use std::path::PathBuf;

use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use pyo3::types::{PyBytes, PyDict};

use reapsnap_core::analysis;
use reapsnap_core::disk;
use reapsnap_core::engine::{self, Artifacts, EngineParams, RestoreMode};
use reapsnap_core::snapshot;
use reapsnap_core::workload;

create_exception!(reapsnap, ReapsnapError, PyException);

fn err(e: impl std::fmt::Display) -> PyErr {
    ReapsnapError::new_err(e.to_string())
}

#[pyclass(name = "SnapshotImage", frozen)]
struct PySnapshotImage(snapshot::SnapshotImage);

#[pymethods]
impl PySnapshotImage {
    #[staticmethod]
    #[pyo3(signature = (dir, num_pages, page_size = 4096, content_seed = 7, vmm_state_bytes = 1 << 20))]
    fn create(dir: PathBuf, num_pages: u64, page_size: u32, content_seed: u64, vmm_state_bytes: u64) -> PyResult<Self> {
        snapshot::create_synthetic_image(&dir, num_pages, page_size, content_seed, vmm_state_bytes)
            .map(Self)
            .map_err(err)
    }

    #[staticmethod]
    fn open(dir: PathBuf) -> PyResult<Self> {
        snapshot::SnapshotImage::open(&dir).map(Self).map_err(err)
    }

    #[getter]
    fn num_pages(&self) -> u64 {
        self.0.num_pages()
    }

    #[getter]
    fn page_size(&self) -> u32 {
        self.0.page_size()
    }

    fn page<'py>(&self, py: Python<'py>, index: u64) -> PyResult<Bound<'py, PyBytes>> {
        let bytes = self.0.page(index).map_err(err)?;
        Ok(PyBytes::new(py, &bytes))
    }

    fn verify(&self) -> PyResult<()> {
        self.0.verify().map_err(err)
    }
}

#[pyclass(name = "PageTrace", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyPageTrace(snapshot::PageTrace);

#[pymethods]
impl PyPageTrace {
    #[new]
    fn new(page_size: u32, offsets: Vec<u64>) -> PyResult<Self> {
        snapshot::PageTrace::new(page_size, offsets).map(Self).map_err(err)
    }

    #[staticmethod]
    fn from_pages(page_size: u32, pages: Vec<u64>) -> PyResult<Self> {
        snapshot::PageTrace::from_pages(page_size, pages).map(Self).map_err(err)
    }

    #[staticmethod]
    fn decode(data: &[u8]) -> PyResult<Self> {
        snapshot::PageTrace::decode(data).map(Self).map_err(err)
    }

    #[staticmethod]
    fn read(path: PathBuf) -> PyResult<Self> {
        snapshot::PageTrace::read(&path).map(Self).map_err(err)
    }

    fn encode<'py>(&self, py: Python<'py>) -> Bound<'py, PyBytes> {
        PyBytes::new(py, &self.0.encode())
    }

    fn write(&self, path: PathBuf) -> PyResult<()> {
        self.0.write(&path).map_err(err)
    }

    #[getter]
    fn page_size(&self) -> u32 {
        self.0.page_size()
    }

    #[getter]
    fn offsets(&self) -> Vec<u64> {
        self.0.offsets().to_vec()
    }

    #[getter]
    fn pages(&self) -> Vec<u64> {
        self.0.page_indices().collect()
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }
}

#[pyclass(name = "WorkingSetFile", frozen)]
struct PyWorkingSet(snapshot::WorkingSetFile);

#[pymethods]
impl PyWorkingSet {
    #[staticmethod]
    fn build(image: &PySnapshotImage, trace: &PyPageTrace) -> PyResult<Self> {
        snapshot::build_working_set(&image.0, &trace.0).map(Self).map_err(err)
    }

    #[staticmethod]
    fn read(path: PathBuf, trace: &PyPageTrace) -> PyResult<Self> {
        snapshot::WorkingSetFile::read(&path, trace.0.clone()).map(Self).map_err(err)
    }

    fn write(&self, path: PathBuf) -> PyResult<()> {
        self.0.write(&path).map_err(err)
    }

    /// True when every page matches the image.
    fn validate(&self, image: &PySnapshotImage) -> PyResult<bool> {
        snapshot::validate_working_set(&image.0, self.0.trace(), &self.0).map(|v| v.is_ok()).map_err(err)
    }

    #[getter]
    fn trace(&self) -> PyPageTrace {
        PyPageTrace(self.0.trace().clone())
    }

    #[getter]
    fn page_count(&self) -> usize {
        self.0.page_count()
    }

    fn page<'py>(&self, py: Python<'py>, index: usize) -> PyResult<Bound<'py, PyBytes>> {
        if index >= self.0.page_count() {
            return Err(err(format!("index {index} out of range")));
        }
        Ok(PyBytes::new(py, self.0.page(index)))
    }
}

#[pyclass(name = "StorageModel", frozen)]
struct PyStorageModel(disk::StorageModel);

#[pymethods]
impl PyStorageModel {
    #[new]
    #[pyo3(signature = (calibration = None))]
    fn new(calibration: Option<PathBuf>) -> PyResult<Self> {
        match calibration {
            None => Ok(Self(disk::StorageModel::default())),
            Some(p) => disk::StorageModel::load_calibration(&p).map(Self).map_err(err),
        }
    }

    #[pyo3(signature = (size, concurrency = 1, bypass = false))]
    fn throughput(&self, size: u64, concurrency: u32, bypass: bool) -> f64 {
        self.0.throughput(size, concurrency, bypass)
    }

    fn fault_read(&self, page_size: u64) -> f64 {
        self.0.fault_read(page_size)
    }

    fn render_calibration(&self) -> String {
        self.0.render_calibration()
    }
}

#[pyclass(name = "AccessSequence", frozen)]
struct PySequence(workload::AccessSequence);

#[pymethods]
impl PySequence {
    #[staticmethod]
    fn parse(text: &str) -> PyResult<Self> {
        workload::AccessSequence::parse(text).map(Self).map_err(err)
    }

    #[staticmethod]
    #[pyo3(signature = (pages, compute_us = 0))]
    fn body_reads(pages: Vec<u64>, compute_us: u64) -> Self {
        Self(workload::AccessSequence::body_reads(pages, compute_us))
    }

    fn render(&self) -> String {
        self.0.render()
    }

    fn first_touch_order(&self) -> Vec<u64> {
        self.0.first_touch_order()
    }

    #[getter]
    fn compute_us(&self) -> u64 {
        self.0.compute_us
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }
}

#[pyclass(name = "RestoreReport", frozen)]
struct PyReport(engine::RestoreReport);

#[pymethods]
impl PyReport {
    #[getter]
    fn mode(&self) -> &'static str {
        self.0.mode.as_str()
    }

    #[getter]
    fn total_latency_us(&self) -> f64 {
        self.0.total_latency_us
    }

    #[getter]
    fn faults_served(&self) -> u64 {
        self.0.faults_served
    }

    #[getter]
    fn prefetched_pages(&self) -> u64 {
        self.0.prefetched_pages
    }

    #[getter]
    fn effective_read_bandwidth_mbps(&self) -> f64 {
        self.0.effective_read_bandwidth_mbps
    }

    fn breakdown<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let d = PyDict::new(py);
        for c in engine::Component::ALL {
            d.set_item(c.as_str(), self.0.breakdown.get(c))?;
        }
        Ok(d)
    }

    fn to_json(&self) -> String {
        self.0.to_json()
    }

    fn __repr__(&self) -> String {
        format!("RestoreReport(mode={}, total_latency_us={:.1}, faults_served={})", self.0.mode, self.0.total_latency_us, self.0.faults_served)
    }
}

#[pyfunction]
fn presets() -> Vec<String> {
    workload::presets().into_iter().map(|p| p.name).collect()
}

/// Access sequence of one invocation of a builtin preset.
#[pyfunction]
fn invocation(preset: &str, num_pages: u64, input_seed: u64) -> PyResult<PySequence> {
    let p = workload::preset(preset).map_err(err)?;
    let layout = workload::synthesize_layout(&p, num_pages).map_err(err)?;
    workload::derive_invocation(&p, &layout, input_seed).map(PySequence).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (image, seq, storage = None))]
fn record(image: &PySnapshotImage, seq: &PySequence, storage: Option<&PyStorageModel>) -> PyResult<(PyReport, PyPageTrace, PyWorkingSet)> {
    let model = storage.map_or_else(disk::StorageModel::default, |s| s.0.clone());
    let (report, session) = engine::restore(&image.0, RestoreMode::Record, &model, EngineParams::default(), None, &seq.0).map_err(err)?;
    let (trace, ws) = engine::finalize_record(&session).map_err(err)?;
    Ok((PyReport(report), PyPageTrace(trace), PyWorkingSet(ws)))
}

#[pyfunction]
#[pyo3(signature = (image, mode, seq, storage = None, ws = None))]
fn restore(image: &PySnapshotImage, mode: &str, seq: &PySequence, storage: Option<&PyStorageModel>, ws: Option<&PyWorkingSet>) -> PyResult<PyReport> {
    let mode: RestoreMode = mode.parse().map_err(err)?;
    let model = storage.map_or_else(disk::StorageModel::default, |s| s.0.clone());
    let artifacts = ws.map(|w| Artifacts::reap(w.0.trace(), &w.0));
    let (report, _) = engine::restore(&image.0, mode, &model, EngineParams::default(), artifacts, &seq.0).map_err(err)?;
    Ok(PyReport(report))
}

#[pyfunction]
fn contiguity<'py>(py: Python<'py>, trace: &PyPageTrace) -> PyResult<Bound<'py, PyDict>> {
    let s = analysis::contiguity_stats(&trace.0);
    let d = PyDict::new(py);
    d.set_item("run_count", s.run_count)?;
    d.set_item("mean_run_length", s.mean_run_length)?;
    d.set_item("max_run_length", s.max_run_length)?;
    Ok(d)
}

#[pyfunction]
fn reuse<'py>(py: Python<'py>, a: &PyPageTrace, b: &PyPageTrace) -> PyResult<Bound<'py, PyDict>> {
    let r = analysis::reuse_stats(&a.0, &b.0).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("same", r.same)?;
    d.set_item("unique_a", r.unique_a)?;
    d.set_item("unique_b", r.unique_b)?;
    d.set_item("reuse_fraction", r.reuse_fraction)?;
    Ok(d)
}

#[pyfunction]
fn footprint_mb(trace: &PyPageTrace) -> f64 {
    analysis::footprint(&trace.0)
}

#[pymodule]
fn reapsnap(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("ReapsnapError", m.py().get_type::<ReapsnapError>())?;
    m.add_class::<PySnapshotImage>()?;
    m.add_class::<PyPageTrace>()?;
    m.add_class::<PyWorkingSet>()?;
    m.add_class::<PyStorageModel>()?;
    m.add_class::<PySequence>()?;
    m.add_class::<PyReport>()?;
    m.add_function(wrap_pyfunction!(presets, m)?)?;
    m.add_function(wrap_pyfunction!(invocation, m)?)?;
    m.add_function(wrap_pyfunction!(record, m)?)?;
    m.add_function(wrap_pyfunction!(restore, m)?)?;
    m.add_function(wrap_pyfunction!(contiguity, m)?)?;
    m.add_function(wrap_pyfunction!(reuse, m)?)?;
    m.add_function(wrap_pyfunction!(footprint_mb, m)?)?;
    Ok(())
}
