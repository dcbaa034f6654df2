//! Experiment runner for adastack: config files, parallel seeds and sweeps,
//! evaluation, oracle and cost reports, and SVG plots.

pub mod config;
pub mod error;
pub mod eval;
pub mod plot;
pub mod report;
pub mod run;
pub mod sweep;

pub use error::{HarnessError, Result};
