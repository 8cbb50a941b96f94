use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{what} = {value} is outside the supported range [{min}, {max}]")]
    OutOfRange {
        what: &'static str,
        value: f64,
        min: f64,
        max: f64,
    },

    #[error("{0} targets exceed the candidate capacity d = {1}")]
    Capacity(usize, usize),

    #[error("infeasible assignment: {0}")]
    Infeasible(Infeasibility),

    #[error("{path}: line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("{path}: payload is {actual} bytes, header implies {expected} bytes")]
    PayloadSize {
        path: PathBuf,
        expected: u64,
        actual: u64,
    },

    #[error("{path}: {message}")]
    Schema { path: PathBuf, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Which side of a masked cost matrix could not be assigned.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Infeasibility {
    StarvedRow(usize),
    StarvedColumn(usize),
    /// Every row and column has an allowed entry, but no perfect matching exists.
    NoPerfectMatching,
    /// A ground-truth target that no grid cell can reach.
    UnreachableTarget(usize),
}

impl std::fmt::Display for Infeasibility {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Infeasibility::StarvedRow(i) => write!(f, "row {i} has no unmasked entry"),
            Infeasibility::StarvedColumn(j) => write!(f, "column {j} has no unmasked entry"),
            Infeasibility::NoPerfectMatching => {
                write!(f, "mask admits no perfect matching")
            }
            Infeasibility::UnreachableTarget(j) => {
                write!(
                    f,
                    "target {j} lies outside every candidate's prediction range"
                )
            }
        }
    }
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
