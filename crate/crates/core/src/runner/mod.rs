//! Sweeps, plotting tables, self-checks and the command line.

pub mod cache;
pub mod cli;
pub mod config;
pub mod plot;
pub mod sweep;
pub mod validate;

pub use cache::Cache;
pub use config::{ExperimentKind, SweepConfig};
pub use sweep::{run_sweep, run_sweep_with_threads, ResultRow, SweepSummary};
