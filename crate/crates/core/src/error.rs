use thiserror::Error;

/// Errors produced by the measure arithmetic, the estimators and the file front end.
#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate sample: {0}")]
    DegenerateSample(String),

    #[error("grid mismatch: {left} nodes vs {right} nodes")]
    GridMismatch { left: usize, right: usize },

    #[error("empty input")]
    EmptyInput,

    #[error("tangent maps are based at different measures")]
    BaseMismatch,

    #[error("result is not a measure: quantiles decrease at node {node}")]
    NotAMeasure { node: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("singular normal system (collinear or constant predictors)")]
    SingularSystem,

    #[error("degenerate response: all responses coincide with their barycenter")]
    DegenerateResponse,

    #[error("precondition violated: {0}")]
    PreconditionViolated(String),

    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("no complete windows in input")]
    NoCompleteWindows,

    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn parse(line: u64, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }

    /// Process exit code used by the `dido` binary for this error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parse { .. } | Error::Io(_) | Error::Json(_) => 3,
            Error::GridMismatch { .. } | Error::ShapeMismatch(_) | Error::BaseMismatch => 4,
            Error::SingularSystem => 5,
            Error::DegenerateSample(_)
            | Error::DegenerateResponse
            | Error::NoCompleteWindows
            | Error::EmptyInput => 6,
            Error::NotAMeasure { .. } | Error::InvalidMeasure(_) => 7,
            Error::InvalidConfig(_) | Error::PreconditionViolated(_) => 8,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
