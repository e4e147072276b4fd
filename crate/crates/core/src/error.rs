use thiserror::Error;

/// Errors raised by the simulator and the search algorithms.
#[derive(Debug, Error)]
pub enum SicError {
    /// A configuration value is out of range or inconsistent.
    #[error("configuration error: {0}")]
    Config(String),

    /// A frequency does not fit below the Nyquist limit of the sample rate.
    #[error("nyquist violation: {what} needs {needed_hz:.4e} Hz but Nyquist is {nyquist_hz:.4e} Hz")]
    Nyquist {
        what: &'static str,
        needed_hz: f64,
        nyquist_hz: f64,
    },

    /// Two signals that must share a sample rate do not.
    #[error("sample-rate mismatch: {0:.6e} Hz vs {1:.6e} Hz")]
    RateMismatch(f64, f64),

    /// Input data has the wrong length or is otherwise unusable.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Cross-correlation or power based estimation found nothing usable.
    #[error("estimation failed: {0}")]
    EstimationFailed(String),

    /// Least-squares data matrix is too ill-conditioned to solve without a ridge term.
    #[error("least-squares system is ill-conditioned (condition estimate {condition:.3e})")]
    Conditioning { condition: f64 },

    /// An external residual evaluator failed.
    #[error("evaluator failure: {0}")]
    Evaluator(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, SicError>;
