//! Textual calibration tables.
//!
//! ```text
//! size_bytes,concurrency,bypass,MBps
//! 4096,1,0,32
//! 8388608,1,1,533
//! peak=850
//! min_latency_us=80
//! fault_serial_MBps=43
//! fault_saturation_MBps=85
//! ```
//!
//! The fault-path lines are optional; without them demand faults are served
//! from the table like any other page-sized read.

use std::fs;
use std::path::Path;

use super::{CalibrationPoint, DiskError, FaultPath, StorageModel};

fn parse_bool(s: &str) -> Option<bool> {
    match s {
        "0" | "false" | "no" => Some(false),
        "1" | "true" | "yes" => Some(true),
        _ => None,
    }
}

impl StorageModel {
    pub fn parse_calibration(text: &str) -> Result<Self, DiskError> {
        let mut points = Vec::new();
        let mut peak = None;
        let mut min_latency = None;
        let mut fault_serial = None;
        let mut fault_saturation = None;
        for (n, raw) in text.lines().enumerate() {
            let line_no = n + 1;
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() || line.starts_with("size_bytes") {
                continue;
            }
            let err = |msg: String| DiskError::Parse { line: line_no, msg };
            if let Some((key, value)) = line.split_once('=') {
                let value: f64 = value.trim().parse().map_err(|_| err(format!("bad number {value:?}")))?;
                match key.trim() {
                    "peak" => peak = Some(value),
                    "min_latency_us" => min_latency = Some(value),
                    "fault_serial_MBps" => fault_serial = Some(value),
                    "fault_saturation_MBps" => fault_saturation = Some(value),
                    other => return Err(err(format!("unknown key {other:?}"))),
                }
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            let [size, conc, bypass, mbps] = fields[..] else {
                return Err(err(format!("expected 4 comma-separated fields, got {}", fields.len())));
            };
            points.push(CalibrationPoint {
                size_bytes: size.parse().map_err(|_| err(format!("bad size {size:?}")))?,
                concurrency: conc.parse().map_err(|_| err(format!("bad concurrency {conc:?}")))?,
                bypass: parse_bool(bypass).ok_or_else(|| err(format!("bad bypass flag {bypass:?}")))?,
                mbps: mbps.parse().map_err(|_| err(format!("bad throughput {mbps:?}")))?,
            });
        }
        let peak = peak.ok_or_else(|| DiskError::InvalidCalibration("missing peak=".into()))?;
        let fault_path = match (fault_serial, fault_saturation) {
            (Some(serial_mbps), Some(saturation_mbps)) => Some(FaultPath { serial_mbps, saturation_mbps }),
            (None, None) => None,
            _ => {
                return Err(DiskError::InvalidCalibration(
                    "fault_serial_MBps and fault_saturation_MBps must be given together".into(),
                ))
            }
        };
        StorageModel::new(points, peak, min_latency.unwrap_or(0.0), fault_path)
    }

    pub fn load_calibration(path: impl AsRef<Path>) -> Result<Self, DiskError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| DiskError::Io { path: path.to_path_buf(), source })?;
        Self::parse_calibration(&text)
    }

    pub fn render_calibration(&self) -> String {
        let mut out = String::from("size_bytes,concurrency,bypass,MBps\n");
        for p in self.points() {
            out.push_str(&format!("{},{},{},{}\n", p.size_bytes, p.concurrency, u8::from(p.bypass), p.mbps));
        }
        out.push_str(&format!("peak={}\nmin_latency_us={}\n", self.peak_mbps(), self.min_latency_us()));
        if let Some(f) = self.fault_path() {
            out.push_str(&format!(
                "fault_serial_MBps={}\nfault_saturation_MBps={}\n",
                f.serial_mbps, f.saturation_mbps
            ));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips() {
        let m = StorageModel::default();
        let back = StorageModel::parse_calibration(&m.render_calibration()).unwrap();
        assert_eq!(back.points(), m.points());
        assert_eq!(back.peak_mbps(), 850.0);
        assert_eq!(back.min_latency_us(), 80.0);
        assert_eq!(back.fault_path(), m.fault_path());
    }

    #[test]
    fn parse_errors_name_the_line() {
        let err = StorageModel::parse_calibration("4096,1,0,32\n4096,x,0,1\npeak=1").unwrap_err();
        assert!(matches!(err, DiskError::Parse { line: 2, .. }), "{err}");
        assert!(StorageModel::parse_calibration("4096,1,0,32").is_err());
        assert!(StorageModel::parse_calibration("4096,1,maybe,32\npeak=5").is_err());
        assert!(StorageModel::parse_calibration("4096,1,0,32\npeak=50\nfault_serial_MBps=4").is_err());
    }

    #[test]
    fn comments_and_flags() {
        let m = StorageModel::parse_calibration("# ssd\n4096,1,true,32 # one\npeak=64\n").unwrap();
        assert!(m.points()[0].bypass);
        assert_eq!(m.min_latency_us(), 0.0);
        assert!(m.fault_path().is_none());
    }
}
