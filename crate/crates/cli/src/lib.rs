//! Command-line front end: CSV ingestion, analysis runs, simulation and
//! Monte Carlo evaluation with machine-readable outputs.

pub mod args;
pub mod error;
pub mod ingest;
pub mod report;
pub mod run;

pub use args::{defaulted_options, Cli, Mode};
pub use error::{CliError, Result};
pub use run::{run, Summary};
