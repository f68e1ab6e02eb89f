//! Crate-wide error type.

/// Errors produced by lifting, training, problem assembly, and solvers.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Invalid configuration (bad index, non-positive length scale, ...).
    #[error("configuration error: {0}")]
    Config(String),

    /// Input dimensions do not match the spec or model.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A (cos, sin) orientation pair has near-zero norm; the angle is
    /// undefined and the circle constraint Jacobian is rank deficient.
    #[error("degenerate orientation: cos/sin pair has near-zero norm")]
    DegenerateOrientation,

    /// The constraint Jacobian lost row rank; the SQP subproblem is
    /// infeasible.
    #[error("infeasible constraints: {0}")]
    Infeasible(String),

    /// Model identification failed (singular normal equations, empty data).
    #[error("training error: {0}")]
    Training(String),

    /// The problem has no unknown variables.
    #[error("nothing to solve: all variables are known")]
    NothingToSolve,

    /// A system that must be positive definite failed Cholesky even after
    /// one round of jitter. `eigmin` is an estimate for the offending block.
    #[error("indefinite system after jitter (eigmin estimate {eigmin:.3e})")]
    Indefinite { eigmin: f64 },

    /// Backtracking line search underflowed.
    #[error("line search failed: step size underflow at alpha = {alpha:.3e}")]
    LineSearch { alpha: f64 },

    /// Generic numerical failure (non-finite values, non-PD covariance, ...).
    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    /// Malformed or version-mismatched file.
    #[error("format error: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;
