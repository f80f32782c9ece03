//! Error type shared across the crate.

use thiserror::Error;

/// Anything that can go wrong while fitting, sampling, or calibrating.
#[derive(Debug, Error)]
pub enum SbsError {
    /// Every particle carries zero weight, so the cloud cannot be normalized.
    #[error("degenerate particle cloud: all weights are zero")]
    DegenerateCloud,

    /// A density evaluation produced NaN or +inf for the given particle.
    #[error("non-finite log density {value} at particle {index}")]
    NonFiniteDensity { index: usize, value: f64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid data: {0}")]
    InvalidData(String),

    /// The adaptive schedule hit the step cap before reaching rho = 1.
    #[error("tempering stalled: exceeded {0} steps before reaching rho = 1")]
    Stalled(usize),

    /// An evidence estimate was requested from a trace that never reached rho = 1.
    #[error("incomplete trace: final rho is {0}, expected 1")]
    IncompleteTrace(f64),

    /// An iterative fit ran out of iterations.
    #[error("fit did not converge within {iters} iterations (last objective change {delta:.3e})")]
    NoConvergence { iters: usize, delta: f64 },

    /// The logistic likelihood is unbounded along some direction.
    #[error("maximum likelihood fit diverged; the data are (quasi-)separable")]
    Separation,

    /// Symmetrization enumerates g! label permutations and refuses large g.
    #[error("symmetrization over {0} groups would enumerate {0}! permutations; maximum supported is 6")]
    TooManyGroups(usize),

    #[error("calibration: {0}")]
    Calibration(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, SbsError>;
