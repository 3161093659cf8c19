//! Command-line driver: configuration, band sweeps and output files.

pub mod config;
pub mod error;
pub mod run;

pub use config::{parse_config, ImageInput, Layer, RunConfig};
pub use error::{CliError, Result};
pub use run::{report_complexity, run_registration, BandOutcome, ComplexityRow};
