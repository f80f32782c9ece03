//! Model posteriors over the group count and model-averaged summaries.

use crate::error::{Result, SbsError};
use crate::math::{logsumexp, weighted_quantile};
use serde::{Deserialize, Serialize};

/// Model-averaged moments of one parameter.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BmaMoments {
    pub mean: f64,
    /// Average of the per-model posterior variances.
    pub within_var: f64,
    /// Variance of the per-model posterior means.
    pub between_var: f64,
    pub sd: f64,
    /// Significance ratio mean / sd.
    pub ratio: f64,
}

/// Posterior over candidate models together with averaged parameter
/// summaries.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BmaSummary {
    /// Group counts of the candidate models, in order.
    pub groups: Vec<usize>,
    pub model_posterior: Vec<f64>,
    pub parameters: Vec<String>,
    pub moments: Vec<BmaMoments>,
}

/// Posterior model probabilities from log evidence estimates.
///
/// Softmax of log evidence plus log prior; invariant to adding a
/// constant to all log evidences.
pub fn model_posterior(log_evidence: &[f64], log_prior_g: &[f64]) -> Result<Vec<f64>> {
    if log_evidence.is_empty() || log_evidence.len() != log_prior_g.len() {
        return Err(SbsError::InvalidConfig(
            "model posterior needs matching, non-empty evidence and prior vectors".into(),
        ));
    }
    if log_evidence
        .iter()
        .chain(log_prior_g)
        .any(|v| !v.is_finite())
    {
        return Err(SbsError::InvalidConfig(
            "model posterior needs finite log evidences and priors".into(),
        ));
    }
    let scores: Vec<f64> = log_evidence
        .iter()
        .zip(log_prior_g)
        .map(|(&e, &p)| e + p)
        .collect();
    let lse = logsumexp(&scores);
    Ok(scores.iter().map(|&s| (s - lse).exp()).collect())
}

/// Moments of a parameter averaged over models.
///
/// The variance splits into the mean of the per-model variances plus the
/// variance of the per-model means, so sd^2 = within + between exactly.
pub fn bma_moments(per_g_mean: &[f64], per_g_var: &[f64], p_g: &[f64]) -> Result<BmaMoments> {
    if per_g_mean.len() != per_g_var.len() || per_g_mean.len() != p_g.len() || p_g.is_empty() {
        return Err(SbsError::InvalidConfig(
            "model-averaged moments need equal-length, non-empty inputs".into(),
        ));
    }
    let mean: f64 = per_g_mean.iter().zip(p_g).map(|(&m, &p)| p * m).sum();
    let within_var: f64 = per_g_var.iter().zip(p_g).map(|(&v, &p)| p * v).sum();
    let between_var: f64 = per_g_mean
        .iter()
        .zip(p_g)
        .map(|(&m, &p)| p * (m - mean) * (m - mean))
        .sum();
    let sd = (within_var + between_var).sqrt();
    Ok(BmaMoments {
        mean,
        within_var,
        between_var,
        sd,
        ratio: mean / sd,
    })
}

/// Fraction of replicates whose equal-tailed weighted-quantile interval
/// at `level` contains the replicate's true value.
///
/// Each replicate supplies the true value, the sampled values of the
/// parameter, and their normalized weights.
pub fn ci_coverage(per_replicate: &[(f64, Vec<f64>, Vec<f64>)], level: f64) -> Result<f64> {
    if !(0.0 < level && level < 1.0) {
        return Err(SbsError::InvalidConfig(format!(
            "credibility level must lie in (0, 1), got {level}"
        )));
    }
    if per_replicate.is_empty() {
        return Err(SbsError::InvalidConfig(
            "coverage needs at least one replicate".into(),
        ));
    }
    let tail = (1.0 - level) / 2.0;
    let mut hits = 0usize;
    for (theta_star, values, weights) in per_replicate {
        if values.is_empty() || values.len() != weights.len() {
            return Err(SbsError::InvalidConfig(
                "coverage replicates need matching, non-empty samples and weights".into(),
            ));
        }
        let lo = weighted_quantile(values, weights, tail);
        let hi = weighted_quantile(values, weights, 1.0 - tail);
        if (lo..=hi).contains(theta_star) {
            hits += 1;
        }
    }
    Ok(hits as f64 / per_replicate.len() as f64)
}
