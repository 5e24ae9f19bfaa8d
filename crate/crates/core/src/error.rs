use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A function argument lies outside the mathematical domain of the model.
    #[error("domain error in {op}: {detail}")]
    Domain { op: &'static str, detail: String },

    /// A joint angle left the configured motion range.
    #[error("joint angle {q} rad outside motion range [{lo}, {hi}]")]
    Range { q: f64, lo: f64, hi: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}:{line}:{column}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("muscle {muscle}: {source}")]
    Muscle {
        muscle: String,
        #[source]
        source: Box<Error>,
    },

    #[error("simulation aborted at t = {time:.6} s (muscle {muscle}): {source}")]
    Simulation {
        time: f64,
        muscle: String,
        #[source]
        source: Box<Error>,
    },

    #[error("training aborted at epoch {epoch}, sample {sample}: {term} is {value}")]
    NonFinite {
        epoch: usize,
        sample: usize,
        term: &'static str,
        value: f64,
    },

    #[error("training aborted at epoch {epoch}, sample {sample}: {source}")]
    Training {
        epoch: usize,
        sample: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("residual evaluation failed at time step {step}: {source}")]
    Residual {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("length mismatch: {0}")]
    Length(String),

    #[error("autodiff: {0}")]
    Tape(String),
}

impl Error {
    pub(crate) fn domain(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Domain {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
