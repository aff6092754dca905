use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    /// A curvature entry reached the moment update without being clipped.
    #[error("unclipped diagonal entry {value} at index {index} (expected within [{lo}, {hi}])")]
    UnclippedDiagonal {
        index: usize,
        value: f64,
        lo: f64,
        hi: f64,
    },

    #[error("no moments accumulated yet (step counter is 0)")]
    NoMoments,

    #[error("unknown optimizer key `{0}`")]
    UnknownOptimizer(String),

    #[error("every run diverged for learning rates {0:?}")]
    AllDiverged(Vec<f64>),

    #[error("nothing to emit: record list is empty")]
    EmptyRecords,

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Short machine-readable tag used by the CLI error line.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::NonFinite(_) => "non_finite",
            Error::InvalidConfig(_) => "invalid_config",
            Error::Unsupported(_) => "unsupported",
            Error::UnclippedDiagonal { .. } => "unclipped_diagonal",
            Error::NoMoments => "no_moments",
            Error::UnknownOptimizer(_) => "unknown_optimizer",
            Error::AllDiverged(_) => "all_diverged",
            Error::EmptyRecords => "empty_records",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }
}

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}
