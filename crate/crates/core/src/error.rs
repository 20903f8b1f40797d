use thiserror::Error;

/// Errors raised by the friable toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A precondition on the inputs does not hold.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A real argument is outside the domain of the function.
    #[error("domain error: {0}")]
    Domain(String),

    /// A memo table or enumeration grew past its configured cap.
    #[error("resource limit exceeded: {what} (cap {cap})")]
    ResourceLimit { what: &'static str, cap: u64 },

    /// An iterative method ran out of iterations.
    #[error("{method} did not converge after {iterations} iterations: {detail}")]
    NonConvergence {
        method: &'static str,
        iterations: usize,
        detail: String,
    },

    /// Cholesky factorization hit a non-positive pivot.
    #[error("matrix is not positive definite (pivot {index} = {pivot:e})")]
    NotPositiveDefinite { index: usize, pivot: f64 },

    /// The Rayleigh quotient is undefined (the function is numerically zero).
    #[error("degenerate quotient: denominator {denominator:e} below {threshold:e}")]
    Degenerate { denominator: f64, threshold: f64 },

    /// A bias-weight inequality failed while building a context.
    #[error("bound violated: {0}")]
    BoundViolation(String),

    /// Malformed fixture text.
    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

pub type Result<T> = std::result::Result<T, Error>;
