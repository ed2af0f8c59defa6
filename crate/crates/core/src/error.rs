use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid range: lower {lower} must be below upper {upper}")]
    InvalidRange { lower: f64, upper: f64 },

    #[error("invalid count: {0}")]
    InvalidCount(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("random partition did not converge after {attempts} draws (min_width_fraction too large?)")]
    NonConvergence { attempts: usize },

    #[error("value {value} outside [{lower}, {upper}]")]
    OutOfRange { value: f64, lower: f64, upper: f64 },

    #[error("bin index {index} out of bounds for {bins} bins")]
    IndexOutOfBounds { index: usize, bins: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite training loss at epoch {epoch} (learning rate too large?)")]
    NonFiniteLoss { epoch: usize },

    #[error("empty data: {0}")]
    EmptyData(String),

    #[error("{count} responses outside [{lower}, {upper}] (rows {rows:?})")]
    ResponseOutOfRange {
        count: usize,
        rows: Vec<usize>,
        lower: f64,
        upper: f64,
    },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("unsupported model: {0}")]
    UnsupportedModel(String),

    #[error("missing column `{0}`")]
    MissingColumn(String),

    #[error("duplicate column `{0}`")]
    DuplicateColumn(String),

    #[error("parse error at line {line}, column `{column}`: {message}")]
    Parse {
        line: usize,
        column: String,
        message: String,
    },

    #[error("unparseable timestamp `{0}`")]
    Timestamp(String),

    #[error("data not sorted by time at row {0}")]
    Unsorted(usize),

    #[error("empty fold {0}")]
    EmptyFold(usize),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable snake-case name of the variant, for machine-readable reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidRange { .. } => "invalid_range",
            Error::InvalidCount(_) => "invalid_count",
            Error::InvalidParameter(_) => "invalid_parameter",
            Error::NonConvergence { .. } => "non_convergence",
            Error::OutOfRange { .. } => "out_of_range",
            Error::IndexOutOfBounds { .. } => "index_out_of_bounds",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::NonFiniteLoss { .. } => "non_finite_loss",
            Error::EmptyData(_) => "empty_data",
            Error::ResponseOutOfRange { .. } => "response_out_of_range",
            Error::LengthMismatch { .. } => "length_mismatch",
            Error::UnsupportedModel(_) => "unsupported_model",
            Error::MissingColumn(_) => "missing_column",
            Error::DuplicateColumn(_) => "duplicate_column",
            Error::Parse { .. } => "parse_error",
            Error::Timestamp(_) => "timestamp",
            Error::Unsorted(_) => "unsorted_data",
            Error::EmptyFold(_) => "empty_fold",
            Error::Io { .. } => "io_error",
            Error::Csv(_) => "csv_error",
            Error::Json(_) => "config_parse",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
