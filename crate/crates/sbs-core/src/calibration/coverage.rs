//! Credible-interval coverage study for the covariate block model.
//!
//! Each replicate simulates a network from the prior predictive (with
//! the true group count drawn from a candidate set), fits the
//! variational approximation for every candidate group count, runs the
//! bridge sampler per count, and averages over counts with
//! evidence-based model weights. The replicate then checks whether the
//! equal-tailed interval for each regression coefficient contains the
//! truth, once for the bridge output and once for the variational
//! approximation weighted by its bound values. Exact posteriors cover at
//! the nominal rate; an underdispersed approximation covers below it.

use crate::approx::fit_vb_sbmreg;
use crate::calibration::checking::ReplicateFailure;
use crate::calibration::model_posterior;
use crate::engine::{run_sbs, PathVariant, SamplerConfig};
use crate::error::{Result, SbsError};
use crate::math::weighted_quantile;
use crate::models::sbmreg::{simulate_sbmreg_prior, SbmRegHyper, SbmRegStart, SbmRegTarget};
use crate::rng::{derive_seed, seeded};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Scale and seeds of one coverage study.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SbmCoverageConfig {
    pub replicates: usize,
    /// Nodes per simulated network.
    pub n: usize,
    /// Dyad covariates.
    pub p: usize,
    /// Candidate true group counts, drawn uniformly per replicate.
    pub true_groups: Vec<usize>,
    /// Group counts averaged over when fitting.
    pub fit_groups: Vec<usize>,
    pub hyper: SbmRegHyper,
    /// Sampler settings; the master seed is replaced per replicate.
    pub sampler: SamplerConfig,
    pub master_seed: u64,
    /// Credibility level of the checked intervals.
    pub level: f64,
    /// Draws from the variational model mixture used for its quantiles.
    pub mixture_draws: usize,
}

impl Default for SbmCoverageConfig {
    fn default() -> Self {
        SbmCoverageConfig {
            replicates: 50,
            n: 20,
            p: 3,
            true_groups: vec![1, 2],
            fit_groups: vec![1, 2, 3],
            hyper: SbmRegHyper::default(),
            sampler: SamplerConfig {
                particles: 1000,
                ..SamplerConfig::default()
            },
            master_seed: 0,
            level: 0.95,
            mixture_draws: 4000,
        }
    }
}

impl SbmCoverageConfig {
    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 || self.n < 2 || self.p == 0 {
            return Err(SbsError::InvalidConfig(
                "coverage study dimensions must be positive".into(),
            ));
        }
        if self.true_groups.is_empty() || self.fit_groups.is_empty() {
            return Err(SbsError::InvalidConfig(
                "coverage study needs candidate group counts".into(),
            ));
        }
        if self
            .true_groups
            .iter()
            .chain(&self.fit_groups)
            .any(|&g| g == 0 || g > self.n)
        {
            return Err(SbsError::InvalidConfig(
                "candidate group counts must lie in 1..=n".into(),
            ));
        }
        if !(0.0 < self.level && self.level < 1.0) {
            return Err(SbsError::InvalidConfig(format!(
                "credibility level must lie in (0, 1), got {}",
                self.level
            )));
        }
        if self.mixture_draws == 0 {
            return Err(SbsError::InvalidConfig(
                "mixture_draws must be positive".into(),
            ));
        }
        self.sampler.validate()
    }
}

/// Interval hits of one replicate: per regression coefficient, whether
/// the bridge and variational intervals contained the truth.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct ReplicateHits {
    sbs: Vec<bool>,
    vb: Vec<bool>,
    model_posterior: Vec<f64>,
}

/// Aggregated coverage over replicates and coefficients.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoverageReport {
    pub level: f64,
    /// Fraction of (replicate, coefficient) trials covered by the
    /// bridge intervals.
    pub sbs_coverage: f64,
    /// Same for the variational intervals.
    pub vb_coverage: f64,
    /// Total trials entering each fraction.
    pub trials: usize,
    pub requested: usize,
    /// Average bridge model posterior over the fitted group counts.
    pub mean_model_posterior: Vec<f64>,
    pub fit_groups: Vec<usize>,
    pub failures: Vec<ReplicateFailure>,
}

/// Runs the coverage study.
pub fn run_sbmreg_coverage(cfg: &SbmCoverageConfig) -> Result<CoverageReport> {
    cfg.validate()?;

    let results: Vec<std::result::Result<ReplicateHits, String>> = (0..cfg.replicates)
        .into_par_iter()
        .map(|rep| {
            let seed = derive_seed(cfg.master_seed, rep as u64);
            run_replicate(cfg, seed).map_err(|e| e.to_string())
        })
        .collect();

    let mut hits = Vec::with_capacity(cfg.replicates);
    let mut failures = Vec::new();
    for (rep, res) in results.into_iter().enumerate() {
        match res {
            Ok(h) => hits.push(h),
            Err(message) => failures.push(ReplicateFailure {
                replicate: rep,
                message,
            }),
        }
    }
    if failures.len() * 20 > cfg.replicates {
        return Err(SbsError::Calibration(format!(
            "{} of {} coverage replicates failed (tolerated at most 5%); first failure: {}",
            failures.len(),
            cfg.replicates,
            failures[0].message
        )));
    }

    let trials = hits.len() * cfg.p;
    let count = |pick: fn(&ReplicateHits) -> &Vec<bool>| -> f64 {
        let covered: usize = hits
            .iter()
            .map(|h| pick(h).iter().filter(|&&b| b).count())
            .sum();
        covered as f64 / trials as f64
    };
    let mut mean_post = vec![0.0; cfg.fit_groups.len()];
    for h in &hits {
        for (k, &p) in h.model_posterior.iter().enumerate() {
            mean_post[k] += p / hits.len() as f64;
        }
    }

    Ok(CoverageReport {
        level: cfg.level,
        sbs_coverage: count(|h| &h.sbs),
        vb_coverage: count(|h| &h.vb),
        trials,
        requested: cfg.replicates,
        mean_model_posterior: mean_post,
        fit_groups: cfg.fit_groups.clone(),
        failures,
    })
}

fn run_replicate(cfg: &SbmCoverageConfig, seed: u64) -> Result<ReplicateHits> {
    let mut rng = seeded(seed);
    let g_star = cfg.true_groups[rand::Rng::random_range(&mut rng, 0..cfg.true_groups.len())];
    let (state_star, data) = simulate_sbmreg_prior(cfg.n, cfg.p, g_star, &cfg.hyper, &mut rng);

    let tail = (1.0 - cfg.level) / 2.0;
    let mut log_evidence = Vec::with_capacity(cfg.fit_groups.len());
    let mut elbo = Vec::with_capacity(cfg.fit_groups.len());
    let mut fits = Vec::with_capacity(cfg.fit_groups.len());
    let mut clouds = Vec::with_capacity(cfg.fit_groups.len());
    for (gi, &g) in cfg.fit_groups.iter().enumerate() {
        let fit = fit_vb_sbmreg(&data, g, &cfg.hyper)?;
        let target = SbmRegTarget::new(data.clone(), cfg.hyper, g, SbmRegStart::Vb(fit.clone()))?;
        let mut scfg = cfg.sampler.clone();
        scfg.master_seed = derive_seed(seed, gi as u64);
        scfg.path_variant = PathVariant::Sbs;
        let out = run_sbs(&target, &scfg)?;
        log_evidence.push(out.log_evidence_product);
        elbo.push(fit.elbo);
        fits.push(fit);
        clouds.push(out.final_cloud);
    }

    // bridge side: pool particles across group counts, scaling each
    // cloud's weights by its model posterior under a uniform model prior
    let p_g = model_posterior(&log_evidence, &vec![0.0; log_evidence.len()])?;
    let mut sbs = Vec::with_capacity(cfg.p);
    for d in 0..cfg.p {
        let mut values = Vec::new();
        let mut weights = Vec::new();
        for (cloud, &pg) in clouds.iter().zip(&p_g) {
            for (s, &w) in cloud.particles.iter().zip(&cloud.norm_weights) {
                values.push(s.beta[d]);
                weights.push(pg * w);
            }
        }
        let lo = weighted_quantile(&values, &weights, tail);
        let hi = weighted_quantile(&values, &weights, 1.0 - tail);
        sbs.push((lo..=hi).contains(&state_star.beta[d]));
    }

    // variational side: the bound value plays the evidence's role, and
    // quantiles come from draws of the model-weighted Gaussian mixture
    let p_g_vb = model_posterior(&elbo, &vec![0.0; elbo.len()])?;
    let mut draws: Vec<Vec<f64>> = vec![Vec::with_capacity(cfg.mixture_draws); cfg.p];
    for _ in 0..cfg.mixture_draws {
        let u: f64 = rand::Rng::random(&mut rng);
        let mut pick = fits.len() - 1;
        let mut acc = 0.0;
        for (c, &pg) in p_g_vb.iter().enumerate() {
            acc += pg;
            if u < acc {
                pick = c;
                break;
            }
        }
        let beta = fits[pick].beta_gauss.sample(&mut rng);
        for d in 0..cfg.p {
            draws[d].push(beta[d]);
        }
    }
    let w = vec![1.0 / cfg.mixture_draws as f64; cfg.mixture_draws];
    let mut vb = Vec::with_capacity(cfg.p);
    for d in 0..cfg.p {
        let lo = weighted_quantile(&draws[d], &w, tail);
        let hi = weighted_quantile(&draws[d], &w, 1.0 - tail);
        vb.push((lo..=hi).contains(&state_star.beta[d]));
    }

    Ok(ReplicateHits {
        sbs,
        vb,
        model_posterior: p_g,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config() -> SbmCoverageConfig {
        SbmCoverageConfig {
            replicates: 4,
            n: 10,
            p: 2,
            true_groups: vec![1, 2],
            fit_groups: vec![1, 2],
            sampler: SamplerConfig {
                particles: 150,
                ..SamplerConfig::default()
            },
            master_seed: 81,
            mixture_draws: 500,
            ..SbmCoverageConfig::default()
        }
    }

    #[test]
    fn study_runs_and_is_deterministic() {
        let cfg = tiny_config();
        let a = run_sbmreg_coverage(&cfg).unwrap();
        let b = run_sbmreg_coverage(&cfg).unwrap();
        assert_eq!(a.sbs_coverage, b.sbs_coverage);
        assert_eq!(a.vb_coverage, b.vb_coverage);
        assert_eq!(a.mean_model_posterior, b.mean_model_posterior);
        assert_eq!(a.trials, 8);
        assert!((0.0..=1.0).contains(&a.sbs_coverage));
        assert!((0.0..=1.0).contains(&a.vb_coverage));
        let total: f64 = a.mean_model_posterior.iter().sum();
        assert!((total - 1.0).abs() < 1e-9);
    }

    #[test]
    fn results_do_not_depend_on_thread_count() {
        let cfg = tiny_config();
        let a = run_sbmreg_coverage(&cfg).unwrap();
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap();
        let b = pool.install(|| run_sbmreg_coverage(&cfg).unwrap());
        assert_eq!(a.sbs_coverage, b.sbs_coverage);
        assert_eq!(a.vb_coverage, b.vb_coverage);
    }

    #[test]
    fn validation_rejects_bad_configs() {
        let mut cfg = tiny_config();
        cfg.level = 1.0;
        assert!(cfg.validate().is_err());
        let mut cfg = tiny_config();
        cfg.fit_groups = vec![0];
        assert!(cfg.validate().is_err());
        let mut cfg = tiny_config();
        cfg.true_groups.clear();
        assert!(cfg.validate().is_err());
    }
}
