//! Reproducible runs of the `hilbert-lab` experiments from JSON configs.
//!
//! A config names a command, a master seed, and the inputs the command reads;
//! [`RunReport::run`] executes it and echoes the config next to the results.

pub mod commands;
pub mod config;
pub mod report;

use hilbert_lab::LabError;
use serde_json::json;

pub use commands::{run, GrowthRow, GROWTH_SEARCH_LIMIT};
pub use config::{BallSpec, Command, DescentSpec, Format, GridSpec, RunConfig};
pub use report::{write_atomically, RunReport};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Numeric(LabError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl From<LabError> for CliError {
    fn from(e: LabError) -> Self {
        match e {
            LabError::InvalidArgument(_)
            | LabError::UnknownCatalogEntry(_)
            | LabError::DimensionMismatch { .. }
            | LabError::EnumerationTooLarge { .. } => CliError::Config(e.to_string()),
            other => CliError::Numeric(other),
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numeric(_) => 3,
            CliError::Io(_) => 1,
        }
    }

    /// The error object written to stderr.
    pub fn to_json(&self) -> serde_json::Value {
        let kind = match self {
            CliError::Config(_) => "config",
            CliError::Numeric(_) => "numeric",
            CliError::Io(_) => "io",
        };
        let mut obj = json!({ "error": kind, "message": self.to_string() });
        if let CliError::Numeric(e) = self {
            obj["details"] = match e {
                LabError::NotPositiveDefinite { witness, value } => json!({ "witness": witness, "value": value }),
                LabError::CertificateStale { violation, probe } => json!({ "violation": violation, "probe": probe }),
                LabError::InconsistentEstimates { mu_hat, l_hat } => json!({ "mu_hat": mu_hat, "l_hat": l_hat }),
                _ => serde_json::Value::Null,
            };
        }
        obj
    }
}
