//! Files, datasets, runs and the command line around `beamosd-core`.
//!
//! Formats: 16-bit 8-channel WAV segments, JSON-lines manifests, BTNS tensor
//! containers for features and checkpoints, CSV tables and JSON reports.

pub mod btns;
pub mod cli;
pub mod config;
pub mod csv;
pub mod dataset;
pub mod error;
pub mod manifest;
pub mod parallel;
pub mod runs;
pub mod wav;

pub use error::{Error, Result};
