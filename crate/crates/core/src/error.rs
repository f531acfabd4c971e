use thiserror::Error;

pub type Result<T> = std::result::Result<T, SscError>;

#[derive(Debug, Error)]
pub enum SscError {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    Dimension {
        context: &'static str,
        expected: String,
        got: String,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("numerical failure in {method}: {detail}")]
    Numerical { method: &'static str, detail: String },

    #[error("ingestion error at row {row}, column {col}: {detail}")]
    Ingestion {
        row: usize,
        col: usize,
        detail: String,
    },

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("isolated node {0}: degree is zero")]
    IsolatedNode(usize),

    #[error("{solver} did not converge within {iterations} iterations (residual {residual:.3e})")]
    SolverFailure {
        solver: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("line search failed after {backtracks} backtracks (decrease shortfall {shortfall:.3e})")]
    LineSearch { backtracks: usize, shortfall: f64 },

    #[error("{phase} failed at iteration {iteration}: {source}")]
    AtIteration {
        phase: &'static str,
        iteration: usize,
        #[source]
        source: Box<SscError>,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl SscError {
    pub(crate) fn dim(context: &'static str, expected: impl ToString, got: impl ToString) -> Self {
        SscError::Dimension {
            context,
            expected: expected.to_string(),
            got: got.to_string(),
        }
    }

    pub(crate) fn at(self, phase: &'static str, iteration: usize) -> Self {
        SscError::AtIteration {
            phase,
            iteration,
            source: Box::new(self),
        }
    }
}
