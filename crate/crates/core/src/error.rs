use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("config field `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("{context}: operands live on different grids")]
    GridMismatch { context: &'static str },

    #[error("time {t} is at or beyond the horizon {horizon} = 1/(B*C0)")]
    Horizon { t: f64, horizon: f64 },

    #[error("{what}: requires {requirement}, got {got}")]
    Precondition {
        what: String,
        requirement: String,
        got: String,
    },

    #[error("fixed point not reached after {iters} sweeps; trailing residuals {tail:?}")]
    NoConvergence { iters: usize, tail: Vec<f64> },

    #[error("{context} produced a non-finite value")]
    NonFinite { context: String },

    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse {path}: {message}")]
    Parse { path: String, message: String },
}

impl Error {
    pub fn config(field: &str, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.to_owned(),
            message: message.into(),
        }
    }

    pub fn precondition(what: &str, requirement: &str, got: impl ToString) -> Self {
        Error::Precondition {
            what: what.to_owned(),
            requirement: requirement.to_owned(),
            got: got.to_string(),
        }
    }

    /// Exit status for the command line: config errors are distinguishable
    /// from numerical check failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } | Error::Parse { .. } => 2,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
