use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid interval [{lower}, {upper}]")]
    InvalidInterval { lower: f64, upper: f64 },

    #[error("loss exponent must be finite and >= 1, got {0}")]
    InvalidExponent(f64),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite value at row {row}")]
    NonFinite { row: usize },

    #[error("empty dataset")]
    EmptyDataset,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("reduced interval is empty at the query point")]
    EmptyReducedInterval,

    #[error("row {row}: interval [{lower}, {upper}] does not contain true target {y}")]
    TargetOutsideInterval {
        row: usize,
        lower: f64,
        upper: f64,
        y: f64,
    },

    #[error("{0}")]
    Degenerate(String),

    #[error("missing true targets: {0}")]
    MissingTruth(String),

    #[error("missing column `{0}`")]
    MissingColumn(String),

    #[error("row {row}: {message}")]
    Data { row: usize, message: String },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by bad input data rather than bad configuration.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::InvalidInterval { .. }
                | Error::NonFinite { .. }
                | Error::EmptyDataset
                | Error::TargetOutsideInterval { .. }
                | Error::MissingColumn(_)
                | Error::MissingTruth(_)
                | Error::Data { .. }
                | Error::Csv(_)
                | Error::Io(_)
        )
    }
}
