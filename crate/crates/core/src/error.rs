use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model parameters: {0}")]
    InvalidParams(String),

    #[error("invalid lattice: {0}")]
    InvalidLattice(String),

    #[error("invalid displacement {components:?}: {reason}")]
    InvalidDisplacement { components: Vec<i64>, reason: String },

    #[error("integration failed at t = {time}: {reason}")]
    Integration { time: f64, reason: String },

    #[error("fixed-point search failed: {0}")]
    FixedPoints(String),

    #[error("capacity exceeded: {0}")]
    Capacity(String),

    #[error("steady state is not unique (null-space dimension {dimension})")]
    Degenerate { dimension: usize },

    #[error("solver did not converge: {0}")]
    NoConvergence(String),

    #[error("fit failed: {0}")]
    Fit(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            message: message.into(),
        }
    }
}
