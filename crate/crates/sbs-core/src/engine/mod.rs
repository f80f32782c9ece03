//! Adaptive SMC engine for the geometric bridge path.
//!
//! The engine is model-agnostic: anything implementing [`BridgeTarget`]
//! can be tempered from its starting approximation to its posterior.

mod cloud;
mod sampler;
mod schedule;
mod trace;

pub use cloud::{ess, normalize_log_weights, resample_multinomial, reweight, ParticleCloud};
pub use sampler::{run_sbs, run_sbs_with_init, InitOverride, SamplerOutput};
pub use schedule::{cess, next_rho};
pub use trace::{evidence_path, evidence_product, TemperingTrace};

use crate::error::{Result, SbsError};
use crate::rng::SubRng;
use serde::{Deserialize, Serialize};

/// Which endpoint the bridge starts from.
///
/// `Sbs` tempers from a fitted approximation, `Cbs` from the prior, and
/// `CbsIs` follows the prior path but draws the initial cloud from the
/// approximation, correcting with importance weights prior/approximation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum PathVariant {
    #[default]
    #[serde(rename = "SBS")]
    Sbs,
    #[serde(rename = "CBS")]
    Cbs,
    #[serde(rename = "CBS_IS")]
    CbsIs,
}

impl std::fmt::Display for PathVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            PathVariant::Sbs => "SBS",
            PathVariant::Cbs => "CBS",
            PathVariant::CbsIs => "CBS_IS",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for PathVariant {
    type Err = SbsError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().replace('-', "_").as_str() {
            "SBS" => Ok(PathVariant::Sbs),
            "CBS" => Ok(PathVariant::Cbs),
            "CBS_IS" => Ok(PathVariant::CbsIs),
            other => Err(SbsError::InvalidConfig(format!(
                "unknown path variant '{other}' (expected SBS, CBS or CBS_IS)"
            ))),
        }
    }
}

/// Tuning knobs of the sampler.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerConfig {
    /// Particle count M.
    pub particles: usize,
    /// cESS target fraction: each tempering step keeps cESS >= tau1 * M.
    pub tau1: f64,
    /// ESS resampling fraction: resample when ESS < tau2 * M.
    pub tau2: f64,
    /// MCMC sweeps per propagation step.
    pub mcmc_sweeps: usize,
    /// Master seed; every random stream in the run derives from it.
    pub master_seed: u64,
    pub path_variant: PathVariant,
    /// Bisection iterations when solving for the next rho.
    pub bisection_iters: usize,
    /// Minimum rho increment; also the accuracy of the bisection.
    pub rho_tolerance: f64,
    /// Hard cap on tempering steps, to fail loudly instead of crawling.
    pub max_steps: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            particles: 1000,
            tau1: 0.9,
            tau2: 0.8,
            mcmc_sweeps: 5,
            master_seed: 0,
            path_variant: PathVariant::Sbs,
            bisection_iters: 60,
            rho_tolerance: 1e-10,
            max_steps: 10_000,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.particles < 2 {
            return Err(SbsError::InvalidConfig(format!(
                "particles must be at least 2, got {}",
                self.particles
            )));
        }
        for (name, v) in [("tau1", self.tau1), ("tau2", self.tau2)] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(SbsError::InvalidConfig(format!(
                    "{name} must lie in (0, 1], got {v}"
                )));
            }
        }
        if self.mcmc_sweeps == 0 {
            return Err(SbsError::InvalidConfig(
                "mcmc_sweeps must be at least 1".into(),
            ));
        }
        if self.bisection_iters == 0 {
            return Err(SbsError::InvalidConfig(
                "bisection_iters must be at least 1".into(),
            ));
        }
        if !(self.rho_tolerance > 0.0 && self.rho_tolerance < 1.0) {
            return Err(SbsError::InvalidConfig(format!(
                "rho_tolerance must lie in (0, 1), got {}",
                self.rho_tolerance
            )));
        }
        if self.max_steps == 0 {
            return Err(SbsError::InvalidConfig(
                "max_steps must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// A model exposed to the engine: the two bridge endpoints and a kernel
/// for every intermediate distribution.
///
/// `log_approx` must be a properly normalized density and `sample_approx`
/// must draw exactly from it; `move_kernel` must leave
/// `p_rho ∝ approx^(1-rho) * (lik * prior)^rho` invariant at fixed `rho`.
/// A target whose approximation equals its prior yields the prior-start
/// path (the `Cbs` variant).
pub trait BridgeTarget: Sync {
    type State: Clone + Send + Sync;

    fn log_prior(&self, state: &Self::State) -> f64;
    fn log_lik(&self, state: &Self::State) -> f64;
    fn log_approx(&self, state: &Self::State) -> f64;
    fn sample_approx(&self, rng: &mut SubRng) -> Self::State;
    fn move_kernel(&self, state: &mut Self::State, rho: f64, rng: &mut SubRng);

    /// Column names for the flattened state, in `flatten` order.
    fn param_names(&self) -> Vec<String>;
    /// State as a flat vector for CSV output and summaries.
    fn flatten(&self, state: &Self::State) -> Vec<f64>;

    /// log alpha(theta) = log lik + log prior - log approx, the quantity
    /// whose powers drive both the weights and the evidence estimators.
    fn log_alpha_of(&self, state: &Self::State) -> f64 {
        self.log_lik(state) + self.log_prior(state) - self.log_approx(state)
    }

    /// Tempered log density at `rho`, up to the normalizing constant.
    fn log_tempered(&self, state: &Self::State, rho: f64) -> f64 {
        (1.0 - rho) * self.log_approx(state)
            + rho * (self.log_lik(state) + self.log_prior(state))
    }
}
