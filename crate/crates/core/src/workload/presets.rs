use std::fs;
use std::path::Path;

use serde::Deserialize;

use super::{FunctionProfile, WorkloadError};

/// The shipped preset table.
pub const BUILTIN_PRESETS: &str = include_str!("presets.toml");

#[derive(Debug, Clone, PartialEq)]
pub struct PresetTable {
    profiles: Vec<FunctionProfile>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TableFile {
    preset: Vec<FunctionProfile>,
}

impl PresetTable {
    pub fn parse(text: &str) -> Result<Self, WorkloadError> {
        let file: TableFile = toml::from_str(text).map_err(|e| WorkloadError::PresetTable(e.to_string()))?;
        let mut seen = std::collections::HashSet::new();
        for p in &file.preset {
            p.validate()?;
            if !seen.insert(p.name.clone()) {
                return Err(WorkloadError::PresetTable(format!("duplicate preset {:?}", p.name)));
            }
        }
        Ok(PresetTable { profiles: file.preset })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, WorkloadError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| WorkloadError::Io { path: path.to_path_buf(), source })?;
        Self::parse(&text)
    }

    pub fn builtin() -> Self {
        Self::parse(BUILTIN_PRESETS).expect("builtin presets are valid")
    }

    pub fn profiles(&self) -> &[FunctionProfile] {
        &self.profiles
    }

    pub fn get(&self, name: &str) -> Result<&FunctionProfile, WorkloadError> {
        self.profiles.iter().find(|p| p.name == name).ok_or_else(|| WorkloadError::UnknownPreset(name.to_string()))
    }
}

/// All builtin presets, in table order.
pub fn presets() -> Vec<FunctionProfile> {
    PresetTable::builtin().profiles
}

pub fn preset(name: &str) -> Result<FunctionProfile, WorkloadError> {
    PresetTable::builtin().get(name).cloned()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_fidelity() {
        let all = presets();
        assert_eq!(all.len(), 10);
        let mb: Vec<f64> = all.iter().map(|p| p.ws_bytes(4096) as f64 / (1 << 20) as f64).collect();
        assert_eq!(preset("helloworld").unwrap().ws_bytes(4096), 8 << 20);
        assert_eq!(mb.iter().cloned().fold(f64::INFINITY, f64::min), 8.0);
        assert_eq!(mb.iter().cloned().fold(0.0, f64::max), 99.0);
        let mean = mb.iter().sum::<f64>() / mb.len() as f64;
        assert!((mean - 24.0).abs() < 0.5, "mean {mean}");
        assert_eq!(preset("lr_training").unwrap().mean_run_length, 5.0);
        assert!((preset("image_rotate").unwrap().unique_fraction - 0.24).abs() < 1e-12);
        for p in &all {
            assert!(p.infra_pages <= 2048, "{} infra exceeds 8 MB", p.name);
        }
    }

    #[test]
    fn unknown_and_malformed() {
        assert!(matches!(preset("nope"), Err(WorkloadError::UnknownPreset(_))));
        assert!(PresetTable::parse("[[preset]]\nname = 'x'").is_err());
        let dup = format!("{0}\n{0}", "[[preset]]\nname='a'\nws_pages=1\ninfra_pages=0\nmean_run_length=1.0\nunique_fraction=0.0\ncompute_us=0\nlayout_seed=0");
        assert!(PresetTable::parse(&dup).is_err());
    }
}
