use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("node index {index} out of range for graph with {n} nodes")]
    IndexOutOfRange { index: usize, n: usize },

    #[error("self-loop ({0}, {0}) in edge list")]
    SelfLoopInInput(usize),

    #[error("duplicate edge ({0}, {1})")]
    DuplicateEdge(usize, usize),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("graph has no edges")]
    EmptyEdgeSet,

    #[error("sensitive attribute has a single group; both -1 and +1 must be present")]
    SingleGroup,

    #[error("{name} = {value} is not a probability in [0, 1]")]
    ProbabilityOutOfRange { name: &'static str, value: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("covariance matrix is not positive definite")]
    NonPositiveDefinite,

    #[error("closed-form aggregation requires equal group covariances")]
    UnequalCovariance,

    #[error("covariance matrix is singular")]
    SingularCovariance,

    #[error("group {group} has {size} members, need at least {required}")]
    GroupTooSmall {
        group: i8,
        size: usize,
        required: usize,
    },

    #[error("no ground-truth positives in sensitive group {0}")]
    NoPositivesInGroup(i8),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("variable {0} has no recorded forward value on this tape")]
    BackwardBeforeForward(usize),

    #[error("backward already ran on this tape; higher-order derivatives are unsupported")]
    BackwardAlreadyRun,

    #[error("loss must be scalar, got shape {rows}x{cols}")]
    NonScalarLoss { rows: usize, cols: usize },

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("missing file {0}")]
    MissingFile(PathBuf),

    #[error("{file}: expected {expected} rows, found {found}")]
    RowCountMismatch {
        file: String,
        expected: usize,
        found: usize,
    },

    #[error("label {0} is not binary (0/1)")]
    NonBinaryLabel(i64),

    #[error("sensitive value {0} is not -1 or 1")]
    NonBinarySensitive(i64),

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("config: {0}")]
    Config(String),
}

impl Error {
    /// Process exit code: 2 for numerical failures, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::NumericalFailure(_)
            | Error::NonPositiveDefinite
            | Error::SingularCovariance => 2,
            _ => 1,
        }
    }

    pub(crate) fn dims(msg: impl Into<String>) -> Self {
        Error::DimensionMismatch(msg.into())
    }
}
