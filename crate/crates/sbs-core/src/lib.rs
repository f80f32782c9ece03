//! Adaptive bridge-sampling SMC.
//!
//! The sampler tempers a particle cloud along the geometric path
//! `p_rho ∝ ptilde^(1-rho) * (lik * prior)^rho` from a deterministic
//! posterior approximation `ptilde` (rho = 0) to the exact posterior
//! (rho = 1), adapting the step size so each increment keeps the
//! conditional effective sample size near a target fraction of the
//! cloud. The same trace yields two marginal-likelihood estimators,
//! one from the product of incremental-weight averages and one from
//! trapezoidal path sampling.
//!
//! Crate layout:
//! - [`engine`]: particle cloud, adaptive schedule, the sampler loop,
//!   evidence estimators.
//! - [`approx`]: deterministic starting approximations (Gaussian
//!   variational / maximum likelihood fits, latent class and blockmodel
//!   variational fits, label-symmetrized mixtures).
//! - [`models`]: target distributions with their bridge kernels
//!   (logistic regression, latent class analysis, stochastic blockmodel
//!   with dyad covariates, and small conjugate targets used for
//!   validation).
//! - [`calibration`]: simulation-based calibration (rank statistics,
//!   uniformity tests), model averaging, and interval coverage studies.
//! - [`data`] / [`report`]: dataset I/O and run artifacts.

pub mod approx;
pub mod calibration;
pub mod data;
pub mod engine;
pub mod error;
pub mod math;
pub mod models;
pub mod report;
pub mod rng;

pub use error::{Result, SbsError};
