//! Command-line front end: one TOML config per run, deterministic JSON/CSV
//! outputs, and scriptable exit codes.
//!
//! | code | meaning |
//! |------|---------|
//! | 0 | success |
//! | 1 | numerical or I/O failure |
//! | 2 | config or query error |
//! | 3 | regime mismatch, or a query whose regime leaves the rate unresolved |
//! | 4 | too many simulation replicates hit the population cap |

pub mod commands;
pub mod config;
pub mod output;

use brw_core::deviation::DeviationError;
use thiserror::Error;

pub use config::{ConfigError, RunConfig};

/// Version embedded in every output file.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("invalid query: {0}")]
    Query(DeviationError),
    #[error("regime mismatch: {0}")]
    Regime(String),
    #[error("{capped} of {requested} replicates exceeded the population cap of {cap}")]
    CapBreach { capped: u64, requested: u64, cap: usize },
    #[error("computation failed: {0}")]
    Compute(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl From<DeviationError> for CliError {
    fn from(e: DeviationError) -> Self {
        match e {
            DeviationError::WrongRegime { .. } => CliError::Regime(e.to_string()),
            DeviationError::LevelOutOfRange { .. }
            | DeviationError::ExponentOutOfRange { .. }
            | DeviationError::OutOfRange { .. }
            | DeviationError::NoSolution { .. } => CliError::Query(e),
            _ => CliError::Compute(e.to_string()),
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Query(_) => 2,
            CliError::Regime(_) => 3,
            CliError::CapBreach { .. } => 4,
            CliError::Compute(_) | CliError::Io(_) | CliError::Csv(_) | CliError::Json(_) => 1,
        }
    }
}

/// File format of a command's main output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Json,
    Csv,
}
