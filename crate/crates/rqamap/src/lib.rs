//! Std companion to `rqamap-core`: CSV and JSON file formats, synthetic
//! device profiles with fault injection, bootstrap threshold calibration and
//! the `rqamap` command line.

pub mod cli;
pub mod csv_io;
mod error;
pub mod formats;
pub mod manifest;
pub mod pipeline;
pub mod simulate;
pub mod synth;

pub use error::{Error, Result};
pub use rqamap_core as core;
