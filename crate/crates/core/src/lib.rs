//! Snapshot restore engine with record-and-prefetch of guest-memory working
//! sets, a calibrated storage model, synthetic function workloads, and the
//! experiment drivers built on top of them.

pub mod snapshot;
pub mod disk;
pub mod workload;
pub mod engine;
pub mod analysis;
pub mod bench;
