use sic_core::error::SicError;
use thiserror::Error;

use crate::validate::Diagnostic;

/// CLI failures, each mapped to a process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    /// Malformed scenario text or override.
    #[error("{0}")]
    Schema(String),

    /// The scenario parsed but failed schema or physics checks.
    #[error("{} invalid setting(s):\n{}", .0.len(), .0.iter().map(|d| format!("  {d}")).collect::<Vec<_>>().join("\n"))]
    Invalid(Vec<Diagnostic>),

    /// A simulation step failed or produced a non-finite result.
    #[error("[{module}] {message}")]
    Numerical { module: &'static str, message: String },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Schema(_) | CliError::Invalid(_) => 2,
            CliError::Numerical { .. } => 3,
            CliError::Io(_) => 1,
        }
    }

    /// Tags a core failure with the module that raised it; `default` is the
    /// module driving the experiment.
    pub fn numerical(default: &'static str, e: SicError) -> Self {
        let module = match &e {
            SicError::Conditioning { .. } => "ls-estimator",
            SicError::EstimationFailed(_) => "delay-estimation",
            SicError::Evaluator(_) => "ga-optimizer",
            SicError::Nyquist { .. } => "signal-gen",
            SicError::RateMismatch(..) => "channel-sim",
            SicError::Io(_) | SicError::Json(_) => "experiment-cli",
            SicError::Config(_) | SicError::InvalidInput(_) => default,
        };
        CliError::Numerical { module, message: e.to_string() }
    }
}
