//! Per-step history of a tempering run and the two marginal-likelihood
//! estimators read off it.

use crate::error::{Result, SbsError};
use serde::{Deserialize, Serialize};

/// History of one run: the adaptive schedule plus everything needed to
/// reconstruct both evidence estimates.
///
/// `rho_seq` and `u_seq` have one entry per distribution visited,
/// starting at rho = 0; the remaining vectors have one entry per step.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TemperingTrace {
    pub rho_seq: Vec<f64>,
    pub cess_seq: Vec<f64>,
    pub ess_seq: Vec<f64>,
    pub resampled: Vec<bool>,
    /// log Σ_m W^m α^{mΔρ} per step, computed with the weights and alphas
    /// of the generation before the step.
    pub step_log_ratio: Vec<f64>,
    /// Weighted mean of log alpha after each step (index 0 = initial cloud).
    pub u_seq: Vec<f64>,
    /// log mean initial weight; zero unless the initial cloud was drawn
    /// from an importance distribution other than the path start.
    pub init_log_ratio: f64,
    /// ESS of the initial weights (equals M unless importance-initialized).
    pub init_ess: f64,
    /// Steps that hit the minimum rho increment.
    pub slow_steps: usize,
}

impl TemperingTrace {
    pub fn new() -> Self {
        TemperingTrace {
            rho_seq: vec![0.0],
            cess_seq: Vec::new(),
            ess_seq: Vec::new(),
            resampled: Vec::new(),
            step_log_ratio: Vec::new(),
            u_seq: Vec::new(),
            init_log_ratio: 0.0,
            init_ess: 0.0,
            slow_steps: 0,
        }
    }

    /// Number of tempering steps taken.
    pub fn steps(&self) -> usize {
        self.rho_seq.len() - 1
    }

    pub fn is_complete(&self) -> bool {
        self.rho_seq.last().copied() == Some(1.0)
    }

    fn require_complete(&self) -> Result<()> {
        if !self.is_complete() {
            return Err(SbsError::IncompleteTrace(
                self.rho_seq.last().copied().unwrap_or(f64::NAN),
            ));
        }
        Ok(())
    }
}

impl Default for TemperingTrace {
    fn default() -> Self {
        Self::new()
    }
}

/// Log evidence from the product of per-step weight averages: the sum of
/// the step log ratios, plus the initial importance correction when the
/// first cloud was not drawn from the path start.
pub fn evidence_product(trace: &TemperingTrace) -> Result<f64> {
    trace.require_complete()?;
    Ok(trace.init_log_ratio + trace.step_log_ratio.iter().sum::<f64>())
}

/// Log evidence by trapezoidal path sampling: the thermodynamic integral
/// of the weighted mean of log alpha over the visited schedule.
pub fn evidence_path(trace: &TemperingTrace) -> Result<f64> {
    trace.require_complete()?;
    if trace.u_seq.len() != trace.rho_seq.len() {
        return Err(SbsError::IncompleteTrace(
            trace.rho_seq.last().copied().unwrap_or(f64::NAN),
        ));
    }
    let mut total = trace.init_log_ratio;
    for h in 1..trace.rho_seq.len() {
        let delta = trace.rho_seq[h] - trace.rho_seq[h - 1];
        total += 0.5 * delta * (trace.u_seq[h] + trace.u_seq[h - 1]);
    }
    Ok(total)
}
