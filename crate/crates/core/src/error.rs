use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid size {0}: at least 2 cells per side are required")]
    InvalidSize(usize),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("point ({x}, {y}) lies outside the unit square")]
    OutOfDomain { x: f64, y: f64 },

    #[error("derivative order ({0}, {1}) is not supported (max 2 per direction)")]
    UnsupportedDerivative(usize, usize),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("decomposition does not cover free DOF {0}")]
    Uncovered(usize),

    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("{solver} did not converge in {iterations} iterations (residual {residual:e})")]
    NonConvergence {
        solver: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("iterate is infeasible: max violation {0:e}")]
    Infeasible(f64),

    #[error("outer iteration {iteration}: subproblem {subproblem} failed: {source}")]
    Subproblem {
        iteration: usize,
        subproblem: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("positivity-preserving construction failed at fine vertex ({i}, {j}): {reason}")]
    Construction { i: usize, j: usize, reason: String },

    #[error("reference file: {0}")]
    Reference(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Errors caused by the input (sizes, parameters, files) rather than by
    /// a solver.
    pub fn is_configuration(&self) -> bool {
        matches!(
            self,
            Error::InvalidSize(_) | Error::Config(_) | Error::InvalidParameter(_) | Error::Reference(_) | Error::Io(_)
        )
    }
}
