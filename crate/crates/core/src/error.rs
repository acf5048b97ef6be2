use thiserror::Error;

/// Errors produced anywhere in the crate.
///
/// Variants are grouped by the exit-code classes the CLI exposes; see
/// [`Error::exit_code`].
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Dimension {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("shape error: {0}")]
    Shape(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("contract violated: {0}")]
    Contract(String),
    #[error("non-finite value: {0}")]
    Numeric(String),
    #[error("degenerate target: {0} has zero norm")]
    DegenerateTarget(String),
    #[error("degenerate field: variance is zero")]
    DegenerateField,
    #[error("solver failure: {0}")]
    Solver(String),
    #[error("format error at byte {offset}: {msg}")]
    Format { offset: u64, msg: String },
    #[error("non-finite gradient in parameter `{0}`")]
    NonFiniteGradient(String),
    #[error("training aborted: {0}")]
    Training(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn dim(op: &'static str, lhs: &[usize], rhs: &[usize]) -> Self {
        Error::Dimension {
            op,
            lhs: lhs.to_vec(),
            rhs: rhs.to_vec(),
        }
    }

    /// Process exit code: 2 usage, 3 numeric or solver failure, 4 shape or
    /// compatibility failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Contract(_) | Error::Io(_) | Error::Json(_) => 2,
            Error::Numeric(_)
            | Error::DegenerateTarget(_)
            | Error::DegenerateField
            | Error::Solver(_)
            | Error::NonFiniteGradient(_)
            | Error::Training(_) => 3,
            Error::Dimension { .. } | Error::Shape(_) | Error::Format { .. } => 4,
        }
    }
}
