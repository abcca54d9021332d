use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A user-supplied value violates its contract. `field` names the offending input.
    #[error("invalid {field}: {message}")]
    Validation { field: String, message: String },

    #[error("problem generation failed: {0}")]
    Generation(String),

    #[error("unsupported configuration: {0}")]
    UnsupportedConfiguration(String),

    #[error("degenerate spectrum: {0}")]
    DegenerateSpectrum(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("iterates diverged at step {step}")]
    Diverged { step: usize },

    #[error("exact oracle unavailable: {0}")]
    UnsupportedOracle(String),

    #[error("no stationary distribution: spectral radius {rho} >= 1")]
    NoStationaryDistribution { rho: f64 },

    #[error("undefined regime: {0}")]
    UndefinedRegime(String),

    #[error("unstable parameters: {0}")]
    Instability(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("malformed json: {0}")]
    Json(String),
}

impl Error {
    pub(crate) fn validation(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation {
            field: field.into(),
            message: message.into(),
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(err: serde_json::Error) -> Self {
        Error::Json(err.to_string())
    }
}
