use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::WorkloadError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    /// Restoring the connection from the orchestrator to the function.
    Conn,
    /// Processing the invocation.
    Body,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AccessKind {
    Read,
    Write,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Access {
    pub phase: Phase,
    pub page: u64,
    pub kind: AccessKind,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::Conn => "conn",
            Phase::Body => "body",
        })
    }
}

impl FromStr for Phase {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "conn" => Ok(Phase::Conn),
            "body" => Ok(Phase::Body),
            _ => Err(format!("unknown phase {s:?}")),
        }
    }
}

impl fmt::Display for AccessKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AccessKind::Read => "read",
            AccessKind::Write => "write",
        })
    }
}

impl FromStr for AccessKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "read" => Ok(AccessKind::Read),
            "write" => Ok(AccessKind::Write),
            _ => Err(format!("unknown access kind {s:?}")),
        }
    }
}

/// Page accesses of one invocation: connection-restore accesses first, then
/// the body, then `compute_us` of pure computation.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccessSequence {
    accesses: Vec<Access>,
    pub compute_us: u64,
}

impl AccessSequence {
    pub fn new(accesses: Vec<Access>, compute_us: u64) -> Result<Self, WorkloadError> {
        if let Some(pos) = accesses.windows(2).position(|w| w[0].phase == Phase::Body && w[1].phase == Phase::Conn) {
            return Err(WorkloadError::Parse { line: pos + 2, msg: "conn access after body access".into() });
        }
        Ok(AccessSequence { accesses, compute_us })
    }

    /// Body-phase reads of `pages`, in order.
    pub fn body_reads(pages: impl IntoIterator<Item = u64>, compute_us: u64) -> Self {
        let accesses = pages.into_iter().map(|page| Access { phase: Phase::Body, page, kind: AccessKind::Read }).collect();
        AccessSequence { accesses, compute_us }
    }

    pub fn accesses(&self) -> &[Access] {
        &self.accesses
    }

    pub fn len(&self) -> usize {
        self.accesses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.accesses.is_empty()
    }

    /// Distinct pages in first-touch order.
    pub fn first_touch_order(&self) -> Vec<u64> {
        let mut seen = HashSet::with_capacity(self.accesses.len());
        self.accesses.iter().map(|a| a.page).filter(|p| seen.insert(*p)).collect()
    }

    pub fn page_set(&self) -> HashSet<u64> {
        self.accesses.iter().map(|a| a.page).collect()
    }

    pub fn max_page(&self) -> Option<u64> {
        self.accesses.iter().map(|a| a.page).max()
    }

    pub fn render(&self) -> String {
        let mut out = format!("compute_us={}\n", self.compute_us);
        for a in &self.accesses {
            out.push_str(&format!("{},{},{}\n", a.phase, a.page, a.kind));
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, WorkloadError> {
        let mut compute_us = None;
        let mut accesses = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            let err = |msg: String| WorkloadError::Parse { line: n + 1, msg };
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(v) = line.strip_prefix("compute_us=") {
                if compute_us.is_some() {
                    return Err(err("duplicate compute_us header".into()));
                }
                compute_us = Some(v.trim().parse().map_err(|_| err(format!("bad compute_us {v:?}")))?);
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            let [phase, page, kind] = fields[..] else {
                return Err(err(format!("expected phase,page_index,kind, got {line:?}")));
            };
            let access = Access {
                phase: phase.parse().map_err(err)?,
                page: page.parse().map_err(|_| err(format!("bad page index {page:?}")))?,
                kind: kind.parse().map_err(err)?,
            };
            if access.phase == Phase::Conn && accesses.last().is_some_and(|a: &Access| a.phase == Phase::Body) {
                return Err(err("conn access after body access".into()));
            }
            accesses.push(access);
        }
        let compute_us = compute_us.ok_or(WorkloadError::Parse { line: 1, msg: "missing compute_us= header".into() })?;
        Ok(AccessSequence { accesses, compute_us })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<(), WorkloadError> {
        let path = path.as_ref();
        fs::write(path, self.render()).map_err(|source| WorkloadError::Io { path: path.to_path_buf(), source })
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self, WorkloadError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| WorkloadError::Io { path: path.to_path_buf(), source })?;
        Self::parse(&text)
    }
}
