use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("graph is disconnected: `{0}` cannot reach `{1}`")]
    Disconnected(String, String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("unknown vertex `{0}`")]
    UnknownVertex(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("fractional order s = {0} outside the open interval (0, 1)")]
    OrderOutOfRange(f64),

    #[error("exponent p = {0} unsupported (requires p >= 2)")]
    ExponentUnsupported(f64),

    #[error("negative time t = {0}")]
    NegativeTime(f64),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("eigensolver failure: {0}")]
    Eigen(String),

    #[error("quadrature error estimate {estimate:.3e} exceeds tolerance {tol:.1e} at entry ({x}, {y})")]
    Quadrature { estimate: f64, tol: f64, x: usize, y: usize },

    #[error("root bracketing failed: {0}")]
    Bracketing(String),

    #[error("no start converged: {}", .0.join("; "))]
    NotConverged(Vec<String>),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable machine-readable category, used by the CLI error line.
    pub fn category(&self) -> &'static str {
        match self {
            Error::InvalidGraph(_) | Error::Disconnected(..) | Error::UnknownVertex(_) => "graph",
            Error::Parse { .. } => "parse",
            Error::DimensionMismatch { .. } => "dimension",
            Error::OrderOutOfRange(_)
            | Error::ExponentUnsupported(_)
            | Error::NegativeTime(_)
            | Error::InvalidArgument(_) => "argument",
            Error::Precondition(_) => "precondition",
            Error::Eigen(_) => "eigen",
            Error::Quadrature { .. } => "quadrature",
            Error::Bracketing(_) | Error::NotConverged(_) => "convergence",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }
}
