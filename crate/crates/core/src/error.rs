//! Error type shared by the engine.

use thiserror::Error;

/// Errors surfaced by grids, operators, solvers and the semigroup lab.
#[derive(Debug, Clone, Error)]
pub enum Error {
    /// Grid or model parameters violate a structural precondition.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// An argument is outside the domain an operation is defined on.
    #[error("domain error: {0}")]
    Domain(String),

    /// A history buffer did not carry the expected number of slices.
    #[error("incomplete history: expected {expected} slices, got {got}")]
    IncompleteHistory { expected: usize, got: usize },

    /// Explicit time step violates the CFL stability constraint.
    #[error("CFL violation: dt*gamma_max = {flux_step} exceeds dx = {dx}")]
    CflViolation { flux_step: f64, dx: f64 },

    /// Fixed-point iteration did not reach tolerance within the budget.
    #[error("fixed-point iteration failed to converge on slab {slab}: residual {residual} after {iterations} iterations (tol {tol})")]
    ConvergenceFailure {
        slab: usize,
        iterations: usize,
        residual: f64,
        tol: f64,
    },

    /// Density mass reached the truncation boundary beyond the allowed fraction.
    #[error("mass escaping the size domain at t = {time}: boundary-cell fraction {fraction} exceeds {limit}")]
    MassEscape {
        time: f64,
        fraction: f64,
        limit: f64,
    },

    /// A numeric evaluation produced NaN or infinity.
    #[error("non-finite value in {context} at step {step}")]
    NonFinite { context: String, step: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
