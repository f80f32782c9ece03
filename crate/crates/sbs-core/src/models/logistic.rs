//! Bayesian logistic regression as a bridge target.
//!
//! Prior N(0, prior_var I) on the coefficients; the move kernel is
//! random-walk Metropolis with a three-component mixture proposal whose
//! covariances are {1, 0.1, 10} times a reference covariance (the
//! maximum likelihood one in the intended workflow). The mixture depends
//! only on the displacement, so it is symmetric and the acceptance
//! ratio needs no proposal correction.

use crate::approx::GaussianApprox;
use crate::engine::BridgeTarget;
use crate::error::{Result, SbsError};
use crate::math::log1pexp;
use crate::rng::SubRng;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

/// Proposal scale multipliers applied to the reference covariance.
pub const PROPOSAL_SCALES: [f64; 3] = [1.0, 0.1, 10.0];

/// Design matrix and binary response.
#[derive(Debug, Clone)]
pub struct LogisticData {
    pub x: DMatrix<f64>,
    pub y: Vec<u8>,
}

impl LogisticData {
    pub fn new(x: DMatrix<f64>, y: Vec<u8>) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(SbsError::InvalidData(format!(
                "design has {} rows but response has {}",
                x.nrows(),
                y.len()
            )));
        }
        if y.iter().any(|&v| v > 1) {
            return Err(SbsError::InvalidData(
                "response entries must be 0 or 1".into(),
            ));
        }
        Ok(LogisticData { x, y })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }
}

/// Log likelihood Σ_i [y_i x_iᵀθ − log(1 + exp(x_iᵀθ))].
pub fn log_likelihood(data: &LogisticData, theta: &DVector<f64>) -> f64 {
    let eta = &data.x * theta;
    let mut ll = 0.0;
    for (i, &e) in eta.iter().enumerate() {
        ll += data.y[i] as f64 * e - log1pexp(e);
    }
    ll
}

/// Log joint: likelihood plus the isotropic Gaussian log prior.
pub fn log_joint(data: &LogisticData, theta: &DVector<f64>, prior_var: f64) -> f64 {
    log_likelihood(data, theta) + log_prior(theta, prior_var)
}

fn log_prior(theta: &DVector<f64>, prior_var: f64) -> f64 {
    let p = theta.len() as f64;
    -0.5 * (p * (2.0 * std::f64::consts::PI * prior_var).ln()
        + theta.norm_squared() / prior_var)
}

/// Logistic regression bridge target.
pub struct LogisticTarget {
    data: LogisticData,
    prior_var: f64,
    start: GaussianApprox,
    proposal_chols: Vec<DMatrix<f64>>,
}

impl LogisticTarget {
    /// Target tempering from `start` toward the posterior, proposing
    /// moves scaled by `proposal_cov` (typically the ML covariance).
    pub fn new(
        data: LogisticData,
        prior_var: f64,
        start: GaussianApprox,
        proposal_cov: &GaussianApprox,
    ) -> Result<Self> {
        let p = data.p();
        if start.dim() != p || proposal_cov.dim() != p {
            return Err(SbsError::InvalidData(format!(
                "approximation dimension does not match design (p = {p})"
            )));
        }
        if prior_var <= 0.0 {
            return Err(SbsError::InvalidConfig(
                "prior variance must be positive".into(),
            ));
        }
        let proposal_chols = PROPOSAL_SCALES
            .iter()
            .map(|c| proposal_cov.chol_lower() * c.sqrt())
            .collect();
        Ok(LogisticTarget {
            data,
            prior_var,
            start,
            proposal_chols,
        })
    }

    /// Prior-start target (the prior-path variant): the bridge begins at
    /// N(0, prior_var I) itself.
    pub fn from_prior(
        data: LogisticData,
        prior_var: f64,
        proposal_cov: &GaussianApprox,
    ) -> Result<Self> {
        let p = data.p();
        let prior = GaussianApprox::isotropic(p, prior_var)?;
        Self::new(data, prior_var, prior, proposal_cov)
    }

    pub fn data(&self) -> &LogisticData {
        &self.data
    }

    pub fn start(&self) -> &GaussianApprox {
        &self.start
    }
}

impl BridgeTarget for LogisticTarget {
    type State = DVector<f64>;

    fn log_prior(&self, theta: &DVector<f64>) -> f64 {
        log_prior(theta, self.prior_var)
    }

    fn log_lik(&self, theta: &DVector<f64>) -> f64 {
        log_likelihood(&self.data, theta)
    }

    fn log_approx(&self, theta: &DVector<f64>) -> f64 {
        self.start.log_density(theta)
    }

    fn sample_approx(&self, rng: &mut SubRng) -> DVector<f64> {
        self.start.sample(rng)
    }

    fn move_kernel(&self, theta: &mut DVector<f64>, rho: f64, rng: &mut SubRng) {
        let comp = rng.random_range(0..self.proposal_chols.len());
        let z = DVector::from_fn(theta.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
        let cand = &*theta + &self.proposal_chols[comp] * z;
        let log_ratio = self.log_tempered(&cand, rho) - self.log_tempered(theta, rho);
        if log_ratio >= 0.0 || rng.random::<f64>() < log_ratio.exp() {
            *theta = cand;
        }
    }

    fn param_names(&self) -> Vec<String> {
        (0..self.data.p()).map(|j| format!("theta_{j}")).collect()
    }

    fn flatten(&self, theta: &DVector<f64>) -> Vec<f64> {
        theta.iter().copied().collect()
    }
}
