use thiserror::Error;

/// Errors raised anywhere in the patch-scheme pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// A parameter is outside its mathematical domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// Array shapes disagree with the micro-grid they are used with.
    #[error("shape mismatch in {what}: expected {expected:?}, found {found:?}")]
    Shape {
        what: &'static str,
        expected: (usize, usize),
        found: (usize, usize),
    },

    /// A coupling request cannot be honoured (mode/boundary combination, too few patches).
    #[error("coupling error: {0}")]
    Coupling(String),

    /// Time integration, eigensolve or Krylov iteration failed.
    #[error("solver failure: {0}")]
    Solver(String),

    /// Scenario configuration is invalid; `field` is the dotted key path.
    #[error("config error at `{field}`: {message}")]
    Config { field: String, message: String },

    /// Malformed expression, CSV or TOML input.
    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    /// True for errors a CLI should report as configuration problems (exit code 2).
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config { .. } | Error::Parse(_))
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
