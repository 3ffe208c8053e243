use std::fs;
use std::path::{Path, PathBuf};

use super::BenchError;
use crate::engine::EngineParams;

pub const OUT_ENV: &str = "REAPSNAP_OUT";

/// Experiment settings, read from a `key = value` file.
///
/// ```text
/// # image
/// num_pages = 65536
/// page_size = 4096
/// profiles = helloworld, pyaes
/// concurrency = 1, 2, 4, 8
/// fault_forwarding_us = 25
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub num_pages: u64,
    pub page_size: u32,
    pub content_seed: u64,
    pub vmm_state_bytes: u64,
    /// Defaults to `<out>/image`.
    pub image_dir: Option<PathBuf>,
    /// Preset table replacing the builtin one.
    pub presets: Option<PathBuf>,
    /// Empty selects every preset.
    pub profiles: Vec<String>,
    pub calibration: Option<PathBuf>,
    pub params: EngineParams,
    pub repeats: u32,
    pub seed: u64,
    pub concurrency: Vec<u32>,
    pub out: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            num_pages: 65536,
            page_size: 4096,
            content_seed: 7,
            vmm_state_bytes: 3 << 20,
            image_dir: None,
            presets: None,
            profiles: Vec::new(),
            calibration: None,
            params: EngineParams::default(),
            repeats: 1,
            seed: 1,
            concurrency: vec![1, 2, 4, 8, 16, 32, 64],
            out: PathBuf::from("results"),
        }
    }
}

fn invalid(field: &str, msg: impl Into<String>) -> BenchError {
    BenchError::Config { field: field.to_string(), msg: msg.into() }
}

fn num<T: std::str::FromStr>(field: &str, value: &str) -> Result<T, BenchError> {
    value.parse().map_err(|_| invalid(field, format!("not a valid number: {value:?}")))
}

fn list(value: &str) -> impl Iterator<Item = &str> {
    value.split(',').map(str::trim).filter(|s| !s.is_empty())
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, BenchError> {
        let mut c = ExperimentConfig::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(invalid(&format!("line {}", n + 1), format!("expected key = value, got {line:?}")));
            };
            let (key, value) = (key.trim(), value.trim());
            c.set(key, value)?;
        }
        Ok(c)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, BenchError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| invalid("config", format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Sets one field from its textual form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), BenchError> {
        match key {
            "num_pages" => self.num_pages = num(key, value)?,
            "page_size" => self.page_size = num(key, value)?,
            "content_seed" => self.content_seed = num(key, value)?,
            "vmm_state_bytes" => self.vmm_state_bytes = num(key, value)?,
            "image_dir" => self.image_dir = Some(PathBuf::from(value)),
            "presets" => self.presets = Some(PathBuf::from(value)),
            "profiles" | "profile" => {
                self.profiles = if value == "all" { Vec::new() } else { list(value).map(String::from).collect() }
            }
            "calibration" => self.calibration = Some(PathBuf::from(value)),
            "repeats" => self.repeats = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "concurrency" => self.concurrency = list(value).map(|v| num(key, v)).collect::<Result<_, _>>()?,
            "out" => self.out = PathBuf::from(value),
            "vmm_fixed_overhead_us" => self.params.vmm_fixed_overhead_us = num(key, value)?,
            "fault_forwarding_us" => self.params.fault_forwarding_us = num(key, value)?,
            "per_page_install_us" => self.params.per_page_install_us = num(key, value)?,
            "install_call_us" => self.params.install_call_us = num(key, value)?,
            "resident_access_us" => self.params.resident_access_us = num(key, value)?,
            _ => return Err(invalid(key, "unknown configuration key")),
        }
        Ok(())
    }

    /// Replaces the output directory with `$REAPSNAP_OUT` when set.
    pub fn apply_env(&mut self) {
        if let Some(out) = std::env::var_os(OUT_ENV).filter(|v| !v.is_empty()) {
            self.out = PathBuf::from(out);
        }
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        if self.num_pages == 0 {
            return Err(invalid("num_pages", "must be at least 1"));
        }
        if !self.page_size.is_power_of_two() || self.page_size < crate::snapshot::MIN_PAGE_SIZE {
            return Err(invalid("page_size", format!("{} is not a power of two >= 512", self.page_size)));
        }
        if self.repeats == 0 {
            return Err(invalid("repeats", "must be at least 1"));
        }
        if self.concurrency.is_empty() || self.concurrency.contains(&0) {
            return Err(invalid("concurrency", "counts must be at least 1"));
        }
        for (field, path) in [("presets", &self.presets), ("calibration", &self.calibration)] {
            if let Some(p) = path {
                if !p.is_file() {
                    return Err(invalid(field, format!("{} does not exist", p.display())));
                }
            }
        }
        self.params.validate().map_err(|e| match e {
            crate::engine::EngineError::InvalidParam { field, value } => invalid(field, format!("{value} must be a non-negative number")),
            other => invalid("params", other.to_string()),
        })
    }

    pub fn image_dir(&self) -> PathBuf {
        self.image_dir.clone().unwrap_or_else(|| self.out.join("image"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_validate() {
        let c = ExperimentConfig::parse(
            "# demo\nnum_pages = 1024\nprofiles = helloworld, pyaes\nconcurrency = 1,4\nfault_forwarding_us = 10 # lower\n",
        )
        .unwrap();
        assert_eq!(c.num_pages, 1024);
        assert_eq!(c.profiles, vec!["helloworld", "pyaes"]);
        assert_eq!(c.concurrency, vec![1, 4]);
        assert_eq!(c.params.fault_forwarding_us, 10.0);
        c.validate().unwrap();
        assert!(ExperimentConfig::parse("profiles = all").unwrap().profiles.is_empty());
    }

    #[test]
    fn errors_name_the_field() {
        let field = |r: Result<ExperimentConfig, BenchError>| match r {
            Err(BenchError::Config { field, .. }) => field,
            other => panic!("expected config error, got {other:?}"),
        };
        assert_eq!(field(ExperimentConfig::parse("bogus = 1")), "bogus");
        assert_eq!(field(ExperimentConfig::parse("repeats = x")), "repeats");
        assert_eq!(field(ExperimentConfig::parse("repeats = 0").and_then(|c| c.validate().map(|_| c))), "repeats");
        assert_eq!(field(ExperimentConfig::parse("page_size = 3000").and_then(|c| c.validate().map(|_| c))), "page_size");
        assert_eq!(field(ExperimentConfig::parse("concurrency = 1,0").and_then(|c| c.validate().map(|_| c))), "concurrency");
        assert_eq!(
            field(ExperimentConfig::parse("calibration = /nonexistent/cal.txt").and_then(|c| c.validate().map(|_| c))),
            "calibration"
        );
        assert_eq!(
            field(ExperimentConfig::parse("install_call_us = -1").and_then(|c| c.validate().map(|_| c))),
            "install_call_us"
        );
        assert_eq!(field(ExperimentConfig::parse("no equals sign")), "line 1");
    }
}
