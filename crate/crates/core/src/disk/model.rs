use serde::{Deserialize, Serialize};

use super::DiskError;

/// Bytes per MB. Throughputs are in MiB/s throughout the crate.
pub const MIB: f64 = 1_048_576.0;

/// One measured throughput sample of the storage device.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationPoint {
    pub size_bytes: u64,
    pub concurrency: u32,
    pub bypass: bool,
    pub mbps: f64,
}

/// Throughput of page faults served through the host's lazy file-backed
/// paging path, which scales with concurrency far worse than raw reads.
///
/// Aggregate throughput with `k` concurrent fault streams is the harmonic
/// combination `1 / (1/(k*r) + 1/saturation)`, where `r` is chosen so a
/// single stream sees `serial_mbps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FaultPath {
    pub serial_mbps: f64,
    pub saturation_mbps: f64,
}

impl FaultPath {
    pub fn aggregate(&self, streams: u32) -> f64 {
        let per_stream = 1.0 / (1.0 / self.serial_mbps - 1.0 / self.saturation_mbps);
        1.0 / (1.0 / (streams.max(1) as f64 * per_stream) + 1.0 / self.saturation_mbps)
    }
}

/// The kind of read a request performs; selects which calibration curve
/// governs it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ReadClass {
    /// An explicit read whose throughput depends on its size.
    Sized { bypass: bool },
    /// A large sequential read at the device's bulk cache-bypass rate,
    /// regardless of request size (VMM state load).
    Bulk,
    /// A page-sized demand fault through the host paging path.
    Fault,
}

#[derive(Debug, Clone)]
struct SizeCurves {
    size: u64,
    // index 0: cached, 1: bypass; each sorted by concurrency, non-decreasing.
    curves: [Vec<(u32, f64)>; 2],
}

/// Calibrated storage performance model.
#[derive(Debug, Clone)]
pub struct StorageModel {
    points: Vec<CalibrationPoint>,
    peak_mbps: f64,
    min_latency_us: f64,
    fault_path: Option<FaultPath>,
    sizes: Vec<SizeCurves>,
    gain_curve: Option<Vec<(u32, f64)>>,
}

/// Linear interpolation in log2(concurrency); constant outside the
/// calibrated range.
fn curve_value(curve: &[(u32, f64)], concurrency: u32) -> f64 {
    let k = concurrency.max(1) as f64;
    let (first, last) = (curve[0], curve[curve.len() - 1]);
    if k <= first.0 as f64 {
        return first.1;
    }
    if k >= last.0 as f64 {
        return last.1;
    }
    let upper = curve.iter().position(|&(c, _)| c as f64 >= k).unwrap();
    let (c0, v0) = curve[upper - 1];
    let (c1, v1) = curve[upper];
    let t = (k.log2() - (c0 as f64).log2()) / ((c1 as f64).log2() - (c0 as f64).log2());
    v0 + (v1 - v0) * t
}

impl StorageModel {
    pub fn new(
        points: Vec<CalibrationPoint>,
        peak_mbps: f64,
        min_latency_us: f64,
        fault_path: Option<FaultPath>,
    ) -> Result<Self, DiskError> {
        let bad = |m: String| Err(DiskError::InvalidCalibration(m));
        if points.is_empty() {
            return bad("no calibration points".into());
        }
        if !(peak_mbps.is_finite() && peak_mbps > 0.0) {
            return bad(format!("peak must be positive, got {peak_mbps}"));
        }
        if !(min_latency_us.is_finite() && min_latency_us >= 0.0) {
            return bad(format!("min_latency_us must be non-negative, got {min_latency_us}"));
        }
        for p in &points {
            if p.size_bytes == 0 || p.concurrency == 0 || !(p.mbps.is_finite() && p.mbps > 0.0) {
                return bad(format!("invalid calibration point {p:?}"));
            }
        }
        if let Some(f) = fault_path {
            if !(f.serial_mbps > 0.0 && f.saturation_mbps > f.serial_mbps && f.saturation_mbps.is_finite()) {
                return bad(format!("fault path needs 0 < serial < saturation, got {f:?}"));
            }
        }

        let mut size_values: Vec<u64> = points.iter().map(|p| p.size_bytes).collect();
        size_values.sort_unstable();
        size_values.dedup();
        let sizes: Vec<SizeCurves> = size_values
            .into_iter()
            .map(|size| {
                let curve = |bypass: bool| {
                    let mut c: Vec<(u32, f64)> = points
                        .iter()
                        .filter(|p| p.size_bytes == size && p.bypass == bypass)
                        .map(|p| (p.concurrency, p.mbps))
                        .collect();
                    c.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
                    // Keep the best sample per concurrency, then enforce monotonicity.
                    let mut out: Vec<(u32, f64)> = Vec::with_capacity(c.len());
                    for (k, v) in c {
                        match out.last_mut() {
                            Some(last) if last.0 == k => last.1 = last.1.max(v),
                            Some(last) => {
                                let floor = last.1;
                                out.push((k, v.max(floor)));
                            }
                            None => out.push((k, v)),
                        }
                    }
                    out
                };
                SizeCurves { size, curves: [curve(false), curve(true)] }
            })
            .collect();

        let gain_curve = sizes
            .iter()
            .flat_map(|s| s.curves.iter())
            .filter(|c| c.len() >= 2)
            .max_by_key(|c| c.len())
            .cloned();

        Ok(StorageModel { points, peak_mbps, min_latency_us, fault_path, sizes, gain_curve })
    }

    pub fn points(&self) -> &[CalibrationPoint] {
        &self.points
    }

    pub fn peak_mbps(&self) -> f64 {
        self.peak_mbps
    }

    pub fn min_latency_us(&self) -> f64 {
        self.min_latency_us
    }

    pub fn fault_path(&self) -> Option<FaultPath> {
        self.fault_path
    }

    /// Same calibration with the demand-fault path served by the raw table.
    pub fn without_fault_path(&self) -> Self {
        let mut m = self.clone();
        m.fault_path = None;
        m
    }

    /// Relative throughput gain from issuing `k` requests concurrently,
    /// borrowed from the best-sampled concurrency curve.
    fn gain(&self, concurrency: u32) -> f64 {
        match &self.gain_curve {
            Some(c) => curve_value(c, concurrency) / c[0].1,
            None => 1.0,
        }
    }

    fn rate_at(&self, curves: &SizeCurves, concurrency: u32, bypass: bool) -> f64 {
        let own = &curves.curves[bypass as usize];
        let curve = if own.is_empty() { &curves.curves[!bypass as usize] } else { own };
        if curve.len() >= 2 {
            curve_value(curve, concurrency)
        } else {
            let (c0, v0) = curve[0];
            v0 * self.gain(concurrency) / self.gain(c0)
        }
    }

    /// Aggregate device throughput (MB/s) for `concurrency` outstanding
    /// requests of `size` bytes. Log-log interpolation across calibrated
    /// sizes, log-linear across concurrency, capped at the peak.
    pub fn throughput(&self, size: u64, concurrency: u32, bypass: bool) -> f64 {
        let size = size.max(1);
        let first = &self.sizes[0];
        let last = &self.sizes[self.sizes.len() - 1];
        let rate = if size <= first.size {
            self.rate_at(first, concurrency, bypass)
        } else if size >= last.size {
            self.rate_at(last, concurrency, bypass)
        } else {
            let upper = self.sizes.iter().position(|s| s.size >= size).unwrap();
            let (lo, hi) = (&self.sizes[upper - 1], &self.sizes[upper]);
            let t = ((size as f64).ln() - (lo.size as f64).ln()) / ((hi.size as f64).ln() - (lo.size as f64).ln());
            let (a, b) = (self.rate_at(lo, concurrency, bypass), self.rate_at(hi, concurrency, bypass));
            (a.ln() + (b.ln() - a.ln()) * t).exp()
        };
        rate.min(self.peak_mbps)
    }

    /// Rate of a single large cache-bypass read.
    pub fn bulk_rate(&self) -> f64 {
        self.throughput(u64::MAX, 1, true)
    }

    /// Aggregate throughput when `concurrency` requests of this class and
    /// size are outstanding.
    pub fn aggregate(&self, class: ReadClass, size: u64, concurrency: u32) -> f64 {
        match class {
            ReadClass::Sized { bypass } => self.throughput(size, concurrency, bypass),
            ReadClass::Bulk => self.throughput(u64::MAX, concurrency, true),
            ReadClass::Fault => match self.fault_path {
                Some(f) => f.aggregate(concurrency).min(self.peak_mbps),
                None => self.throughput(size, concurrency, false),
            },
        }
    }

    /// Service time in µs for `size` bytes drained at the aggregate rate of
    /// `concurrency` outstanding requests.
    pub fn service_read(&self, size: u64, concurrency: u32, bypass: bool) -> f64 {
        self.duration_at(size, self.throughput(size, concurrency, bypass))
    }

    /// Time for one request when it shares the device equally with
    /// `concurrency - 1` identical requests.
    pub fn request_duration(&self, class: ReadClass, size: u64, concurrency: u32) -> f64 {
        let k = concurrency.max(1);
        self.duration_at(size, self.aggregate(class, size, k) / k as f64)
    }

    /// One page-sized demand fault with no other traffic.
    pub fn fault_read(&self, page_size: u64) -> f64 {
        self.request_duration(ReadClass::Fault, page_size, 1)
    }

    fn duration_at(&self, size: u64, mbps: f64) -> f64 {
        (size as f64 / (mbps * MIB) * 1e6).max(self.min_latency_us)
    }
}

impl Default for StorageModel {
    /// SATA SSD calibration: one 4 KB request 32 MB/s, sixteen concurrent
    /// 4 KB requests 360 MB/s, an 8 MB read 275 MB/s through the page cache
    /// and 533 MB/s bypassing it, 850 MB/s device peak, and 43 MB/s effective
    /// serial demand paging.
    fn default() -> Self {
        let p = |size_bytes, concurrency, bypass, mbps| CalibrationPoint { size_bytes, concurrency, bypass, mbps };
        StorageModel::new(
            vec![
                p(4096, 1, false, 32.0),
                p(4096, 16, false, 360.0),
                p(8 << 20, 1, false, 275.0),
                p(8 << 20, 1, true, 533.0),
            ],
            850.0,
            80.0,
            Some(FaultPath { serial_mbps: 43.0, saturation_mbps: 85.0 }),
        )
        .expect("default calibration is valid")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, rel: f64) -> bool {
        (a - b).abs() <= rel * b.abs()
    }

    #[test]
    fn calibration_points_reproduced() {
        let m = StorageModel::default();
        assert_eq!(m.throughput(4096, 1, false), 32.0);
        assert_eq!(m.throughput(4096, 16, false), 360.0);
        assert_eq!(m.throughput(8 << 20, 1, false), 275.0);
        assert_eq!(m.throughput(8 << 20, 1, true), 533.0);
        assert_eq!(m.throughput(64 << 20, 1, true), 533.0);
        assert_eq!(m.throughput(4096, 64, false), 360.0);
    }

    #[test]
    fn service_read_examples() {
        let m = StorageModel::default();
        // 4096 B at 32 MB/s
        assert!(close(m.service_read(4096, 1, false), 4096.0 / (32.0 * MIB) * 1e6, 1e-12));
        assert!(close(m.service_read(4096, 1, false), 122.0, 0.01));
        assert!(close(m.service_read(8 << 20, 1, true), 15_000.0, 0.01));
        assert!(close(m.service_read(8 << 20, 1, false), 29_000.0, 0.01));
    }

    #[test]
    fn log_linear_concurrency() {
        let m = StorageModel::default();
        let expected = 32.0 + (360.0 - 32.0) * 0.5; // log2(4) halfway to log2(16)
        assert!(close(m.throughput(4096, 4, false), expected, 1e-12));
    }

    #[test]
    fn bypass_falls_back_for_small_reads() {
        let m = StorageModel::default();
        assert_eq!(m.throughput(4096, 1, true), 32.0);
    }

    #[test]
    fn bulk_reads_gain_from_concurrency_up_to_peak() {
        let m = StorageModel::default();
        assert_eq!(m.throughput(8 << 20, 2, true), 850.0);
        assert!(m.throughput(8 << 20, 2, false) > 275.0);
    }

    #[test]
    fn min_latency_floor() {
        let m = StorageModel::default();
        assert_eq!(m.service_read(1, 1, false), 80.0);
        assert_eq!(m.service_read(0, 1, false), 80.0);
    }

    #[test]
    fn fault_path_rates() {
        let m = StorageModel::default();
        assert!(close(m.fault_read(4096), 4096.0 / (43.0 * MIB) * 1e6, 1e-12));
        let f = m.fault_path().unwrap();
        assert!(close(f.aggregate(1), 43.0, 1e-12));
        assert!(f.aggregate(64) < 85.0 && f.aggregate(64) > 80.0);
        let raw = m.without_fault_path();
        assert!(close(raw.fault_read(4096), raw.service_read(4096, 1, false), 1e-12));
    }

    #[test]
    fn rejects_invalid() {
        assert!(StorageModel::new(vec![], 1.0, 0.0, None).is_err());
        let p = CalibrationPoint { size_bytes: 4096, concurrency: 1, bypass: false, mbps: 10.0 };
        assert!(StorageModel::new(vec![p], 0.0, 0.0, None).is_err());
        assert!(StorageModel::new(vec![p], 10.0, -1.0, None).is_err());
        assert!(StorageModel::new(vec![CalibrationPoint { mbps: -1.0, ..p }], 10.0, 0.0, None).is_err());
        let fault = FaultPath { serial_mbps: 50.0, saturation_mbps: 40.0 };
        assert!(StorageModel::new(vec![p], 10.0, 0.0, Some(fault)).is_err());
    }
}
