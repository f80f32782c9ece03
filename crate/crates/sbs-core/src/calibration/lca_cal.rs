//! Calibration study for the latent class model.
//!
//! Checks four posterior representations against the prior predictive:
//! the plain variational fit, its label-symmetrized version, and bridge
//! runs started from either. Two functionals of the class proportions
//! are tested: the label-invariant |pi_1 - pi_2| and the label-sensitive
//! pi_1. A representation that collapses onto one labeling stays
//! calibrated on the first but fails on the second.

use crate::approx::{fit_vb_lca, symmetrize};
use crate::calibration::{run_checking_procedure, u_statistic, CalibrationReport};
use crate::engine::{run_sbs, PathVariant, SamplerConfig};
use crate::error::{Result, SbsError};
use crate::models::lca::{simulate_lca_prior, LcaHyper, LcaStart, LcaTarget};
use crate::rng::{seeded, SubRng};
use serde::{Deserialize, Serialize};
use statrs::distribution::{Beta, ContinuousCDF};

/// Posterior representation under test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LcaCalMethod {
    /// Plain variational fit, evaluated in closed form.
    Vb,
    /// Symmetrized variational fit, evaluated in closed form.
    VbSym,
    /// Bridge run started from the plain fit.
    SbsVb,
    /// Bridge run started from the symmetrized fit.
    SbsVbSym,
}

impl std::fmt::Display for LcaCalMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            LcaCalMethod::Vb => "VB",
            LcaCalMethod::VbSym => "VB.sym",
            LcaCalMethod::SbsVb => "SBS-from-VB",
            LcaCalMethod::SbsVbSym => "SBS-from-VB.sym",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for LcaCalMethod {
    type Err = SbsError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "vb" => Ok(LcaCalMethod::Vb),
            "vb-sym" | "vb.sym" => Ok(LcaCalMethod::VbSym),
            "sbs-vb" | "sbs-from-vb" => Ok(LcaCalMethod::SbsVb),
            "sbs-vb-sym" | "sbs-from-vb.sym" | "sbs-from-vb-sym" => Ok(LcaCalMethod::SbsVbSym),
            other => Err(SbsError::InvalidConfig(format!(
                "unknown method '{other}' (expected vb, vb-sym, sbs-vb or sbs-vb-sym)"
            ))),
        }
    }
}

/// Scale and seeds of one latent-class calibration study.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LcaCalConfig {
    pub replicates: usize,
    /// Observations per simulated dataset.
    pub n: usize,
    /// Items per observation.
    pub q: usize,
    /// Latent classes.
    pub g: usize,
    pub hyper: LcaHyper,
    /// Sampler settings for the bridge methods; the master seed is
    /// replaced by a per-replicate derived seed.
    pub sampler: SamplerConfig,
    pub master_seed: u64,
    /// Draws used when a closed-form U is not available.
    pub mc_draws: usize,
}

impl Default for LcaCalConfig {
    fn default() -> Self {
        LcaCalConfig {
            replicates: 100,
            n: 100,
            q: 10,
            g: 2,
            hyper: LcaHyper::default(),
            sampler: SamplerConfig {
                particles: 1000,
                ..SamplerConfig::default()
            },
            master_seed: 0,
            mc_draws: 4096,
        }
    }
}

impl LcaCalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.g < 2 {
            return Err(SbsError::InvalidConfig(
                "the proportion-difference functional needs at least two classes".into(),
            ));
        }
        if self.n == 0 || self.q == 0 || self.replicates == 0 || self.mc_draws == 0 {
            return Err(SbsError::InvalidConfig(
                "latent-class study dimensions must be positive".into(),
            ));
        }
        self.sampler.validate()
    }
}

/// Names of the two test functionals, in report order.
pub fn lca_phi_names() -> Vec<String> {
    vec!["abs_pi1_minus_pi2".to_string(), "pi1".to_string()]
}

/// Mixture of Dirichlet components describing the distribution of the
/// proportion vector under a closed-form representation: pairs of
/// (mixture weight, Dirichlet parameters).
fn proportion_components(
    fit: &crate::approx::LcaVbApprox,
    symmetrized: bool,
) -> Result<Vec<(f64, Vec<f64>)>> {
    if !symmetrized {
        return Ok(vec![(1.0, fit.dirichlet_params.clone())]);
    }
    let sym = symmetrize(fit.clone())?;
    let perms = sym.permutations();
    let w = 1.0 / perms.len() as f64;
    Ok(perms
        .iter()
        .map(|sigma| {
            let delta = sigma.iter().map(|&k| fit.dirichlet_params[k]).collect();
            (w, delta)
        })
        .collect())
}

/// U values for the two functionals under a Dirichlet mixture.
///
/// pi_1 has an exact marginal: aggregating a Dirichlet gives
/// pi_1 ~ Beta(delta_1, sum - delta_1). With two classes the proportion
/// difference |pi_1 - pi_2| = |2 pi_1 - 1| also reduces to Beta
/// probabilities; with more classes it falls back to Monte Carlo.
fn case_a_u_values(
    components: &[(f64, Vec<f64>)],
    phi1_star: f64,
    phi2_star: f64,
    mc_draws: usize,
    rng: &mut SubRng,
) -> Result<(f64, f64)> {
    let g = components[0].1.len();

    let mut u2 = 0.0;
    for (w, delta) in components {
        let total: f64 = delta.iter().sum();
        let marginal = Beta::new(delta[0], total - delta[0]).map_err(|e| {
            SbsError::Calibration(format!("invalid Beta marginal from Dirichlet: {e}"))
        })?;
        u2 += w * marginal.cdf(phi2_star);
    }

    let u1 = if g == 2 {
        let mut u = 0.0;
        for (w, delta) in components {
            let marginal = Beta::new(delta[0], delta[1]).map_err(|e| {
                SbsError::Calibration(format!("invalid Beta marginal from Dirichlet: {e}"))
            })?;
            let hi = marginal.cdf((1.0 + phi1_star) / 2.0);
            let lo = marginal.cdf((1.0 - phi1_star) / 2.0);
            u += w * (hi - lo);
        }
        u
    } else {
        let mut phis = Vec::with_capacity(mc_draws);
        for _ in 0..mc_draws {
            let u: f64 = rand::Rng::random(rng);
            let mut pick = components.len() - 1;
            let mut acc = 0.0;
            for (c, (w, _)) in components.iter().enumerate() {
                acc += w;
                if u < acc {
                    pick = c;
                    break;
                }
            }
            let pi = crate::approx::lca_vb::sample_dirichlet(&components[pick].1, rng);
            phis.push((pi[0] - pi[1]).abs());
        }
        let weights = vec![1.0 / mc_draws as f64; mc_draws];
        u_statistic(phi1_star, &phis, &weights)?
    };

    Ok((u1.clamp(0.0, 1.0), u2.clamp(0.0, 1.0)))
}

/// Runs the checking procedure for one method and returns the report.
pub fn run_lca_calibration(cfg: &LcaCalConfig, method: LcaCalMethod) -> Result<CalibrationReport> {
    cfg.validate()?;
    let names = lca_phi_names();
    run_checking_procedure(
        &method.to_string(),
        &names,
        cfg.replicates,
        cfg.master_seed,
        None,
        |_, seed| {
            let mut rng = seeded(seed);
            let (state_star, data) =
                simulate_lca_prior(cfg.n, cfg.q, cfg.g, &cfg.hyper, &mut rng);
            let phi1_star = (state_star.pi[0] - state_star.pi[1]).abs();
            let phi2_star = state_star.pi[0];
            let fit = fit_vb_lca(&data, cfg.g, &cfg.hyper, seed)?;

            match method {
                LcaCalMethod::Vb | LcaCalMethod::VbSym => {
                    let components =
                        proportion_components(&fit, method == LcaCalMethod::VbSym)?;
                    let (u1, u2) = case_a_u_values(
                        &components,
                        phi1_star,
                        phi2_star,
                        cfg.mc_draws,
                        &mut rng,
                    )?;
                    Ok(vec![u1, u2])
                }
                LcaCalMethod::SbsVb | LcaCalMethod::SbsVbSym => {
                    let start = if method == LcaCalMethod::SbsVb {
                        LcaStart::Vb(fit)
                    } else {
                        LcaStart::SymVb(symmetrize(fit)?)
                    };
                    let target = LcaTarget::new(data, cfg.hyper, cfg.g, start)?;
                    let mut scfg = cfg.sampler.clone();
                    scfg.master_seed = seed;
                    scfg.path_variant = PathVariant::Sbs;
                    let out = run_sbs(&target, &scfg)?;
                    let phi1: Vec<f64> = out
                        .final_cloud
                        .particles
                        .iter()
                        .map(|s| (s.pi[0] - s.pi[1]).abs())
                        .collect();
                    let phi2: Vec<f64> =
                        out.final_cloud.particles.iter().map(|s| s.pi[0]).collect();
                    let u1 = u_statistic(phi1_star, &phi1, &out.final_cloud.norm_weights)?;
                    let u2 = u_statistic(phi2_star, &phi2, &out.final_cloud.norm_weights)?;
                    Ok(vec![u1, u2])
                }
            }
        },
    )
}
