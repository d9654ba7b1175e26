use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid spline basis: {0}")]
    InvalidBasis(String),

    #[error("point {0} lies outside the spline domain [0, 1]")]
    OutOfDomain(f64),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("invalid series: {0}")]
    InvalidSeries(String),

    #[error("{path}: row {row}: {message}")]
    Parse {
        path: PathBuf,
        row: u64,
        message: String,
    },

    #[error("{0}: file contains no observations")]
    EmptyFile(PathBuf),

    #[error("invalid configuration: {}", .0.join("; "))]
    Config(Vec<String>),

    #[error("sampler stalled: {0}")]
    SamplerStalled(String),

    #[error("chain has no post-burn-in draws")]
    NoDraws,

    #[error("unknown selector `{0}` for this model")]
    Selector(String),

    #[error("unknown scenario `{0}` (expected AR1, AR2 or INGARCH11)")]
    UnknownCase(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
