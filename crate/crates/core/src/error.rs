use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("cannot sample {needed} nodes from stratum {stratum}: only {available} eligible")]
    Sampling {
        stratum: String,
        needed: usize,
        available: usize,
    },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("query rejected: {0}")]
    Query(String),

    #[error("training diverged at epoch {epoch}: loss = {loss}")]
    Training { epoch: usize, loss: f64 },

    #[error("resource limit: {0}")]
    Resource(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("AUC undefined: {positives} positive and {negatives} negative pairs")]
    UndefinedAuc { positives: usize, negatives: usize },

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            msg: msg.into(),
        }
    }

    /// Short machine-readable tag used in status rows.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Parameter(_) => "parameter",
            Error::Sampling { .. } => "sampling",
            Error::Shape(_) => "shape",
            Error::Query(_) => "query",
            Error::Training { .. } => "training",
            Error::Resource(_) => "resource",
            Error::Input(_) => "input",
            Error::UndefinedAuc { .. } => "undefined-auc",
            Error::Parse { .. } => "parse",
            Error::Io { .. } => "io",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }
}
