use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("kernel derivative undefined at x = {x} (non-smooth profile)")]
    NonDifferentiable { x: f64 },

    #[error("kernel must be normalized to unit L1 mass (got {mass})")]
    KernelNotNormalized { mass: f64 },

    #[error("density has zero mass ({mass:e})")]
    ZeroMass { mass: f64 },

    #[error("empty support range")]
    EmptySupport,

    #[error("perturbation must have zero mass (got {mass:e})")]
    MassNotZero { mass: f64 },

    #[error("explicit step became unstable at step {step}: {reason}")]
    Instability { step: usize, reason: String },

    #[error("power iteration did not converge for L = {length}: residual {residual:e} after {iterations} iterations")]
    NoConvergence {
        length: f64,
        residual: f64,
        iterations: usize,
    },

    #[error("eigenfunction is identically zero")]
    ZeroEigenfunction,

    #[error(
        "no nontrivial steady state for epsilon = {epsilon}: stationary states exist only for 0 < epsilon < ||G||_1 = 1"
    )]
    EpsilonOutOfRange { epsilon: f64 },

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Numerical failures map to exit code 2 in the CLI; everything else is a
    /// usage or configuration problem.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Instability { .. }
                | Error::NoConvergence { .. }
                | Error::EpsilonOutOfRange { .. }
                | Error::ZeroEigenfunction
        )
    }
}
