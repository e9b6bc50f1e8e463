//! Experiment harness: configuration, the audit runner, seeded multi-run
//! experiments with CSV/plot emission, and the CLI glue.

pub mod audits;
pub mod config;
pub mod error;
pub mod experiment;
pub mod plot;
pub mod report;

pub use error::{Error, Result};
