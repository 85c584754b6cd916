use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid matrix: column {column} is identically zero")]
    ZeroColumn { column: usize },

    #[error("dimension mismatch: {what} (expected {expected}, got {got})")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("sample-size hypothesis violated: n = {n} but at least {min_n} rows are required")]
    SampleSize { n: usize, min_n: usize },

    #[error("{solver} did not converge after {iterations} iterations (residual {residual:e})")]
    Convergence {
        solver: &'static str,
        iterations: usize,
        residual: f64,
        /// Iterate held when the budget ran out.
        last_iterate: Vec<f64>,
    },

    #[error("weight problem for column {column} is infeasible or its dual is unbounded (dual objective {dual_objective:e})")]
    Infeasible { column: usize, dual_objective: f64 },

    #[error("column {column}: {source}")]
    Column {
        column: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("trial {trial} at n = {n}: {source}")]
    Trial {
        n: usize,
        trial: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("degenerate test at coordinate {coordinate}: zero standard error with nonzero estimate")]
    DegenerateTest { coordinate: usize },

    #[error("relative error undefined: reference weight matrix is zero")]
    ZeroReference,

    #[error("malformed input: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn mismatch(what: &'static str, expected: usize, got: usize) -> Self {
        Error::DimensionMismatch { what, expected, got }
    }

    /// True for failures raised by an iterative solver rather than by bad input.
    pub fn is_solver_failure(&self) -> bool {
        match self {
            Error::Convergence { .. } | Error::Infeasible { .. } => true,
            Error::Column { source, .. } | Error::Trial { source, .. } => source.is_solver_failure(),
            _ => false,
        }
    }
}
