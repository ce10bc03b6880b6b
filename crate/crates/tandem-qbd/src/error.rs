//! Error type shared by all solvers.

use thiserror::Error;

/// Errors produced by model construction and the numerical solvers.
#[derive(Debug, Clone, Error)]
pub enum Error {
    /// A parameter violates a precondition (non-positive rate, bad cap, ...).
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// The network is unstable for the requested computation.
    #[error("unstable network: {0}")]
    Unstable(String),

    /// A fixed-point or ladder iteration exceeded its cap.
    #[error("iteration cap {cap} exceeded in {context} (last residual {residual:.3e})")]
    IterationCap {
        cap: usize,
        context: &'static str,
        residual: f64,
    },

    /// A linear solve hit a singular (or numerically singular) matrix.
    #[error("singular system in {0}")]
    Singular(&'static str),

    /// A bracketed root finder found no sign change.
    #[error("no sign change on [{lo:.3e}, {hi:.3e}] for {context}")]
    NoBracket {
        lo: f64,
        hi: f64,
        context: &'static str,
    },

    /// The requested decay rate is outside the feasible set.
    #[error("infeasible decay target z = {z}: {reason}")]
    InfeasibleTarget { z: f64, reason: String },

    /// The dense eigensolver did not converge.
    #[error("eigensolver failed: {0}")]
    EigenFailure(&'static str),

    /// A boundary null space was not one-dimensional (non-irreducible boundary).
    #[error("boundary equations are degenerate: {0}")]
    DegenerateBoundary(String),
}

pub type Result<T> = std::result::Result<T, Error>;
