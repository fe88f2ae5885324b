//! Experiment harness: configuration files, seeded batch runs, trace CSVs,
//! percentile sweeps and parallel-rounds tables.

pub mod config;
pub mod error;
pub mod rounds;
pub mod runner;
pub mod stats;
pub mod sweep;
pub mod trace;

pub use error::{CliError, Result};
