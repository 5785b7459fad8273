//! Planning and benchmarking toolkit for composite face-image attacks:
//! region-combination enumeration, mask compositing, pose screening and
//! donor pairing, and the vulnerability / quality / detection metric
//! families, with CSV/PNG/JSON ingestion and a CLI.

pub mod compositing;
pub mod config;
pub mod detection;
pub mod ingest;
pub mod pose;
pub mod quality;
pub mod regions;
pub mod vulnerability;
