//! The tempering loop: initialize at the start distribution, then
//! adapt, reweight, resample, propagate until rho reaches 1.

use super::{
    cess, ess, next_rho, resample_multinomial, reweight, BridgeTarget, ParticleCloud,
    SamplerConfig, TemperingTrace,
};
use super::{evidence_path, evidence_product};
use crate::error::{Result, SbsError};
use crate::math::logsumexp;
use crate::rng::{substream, SubRng, RESAMPLE_SLOT};
use rayon::prelude::*;
use std::time::Instant;

/// Initial-cloud distribution used instead of the path start.
///
/// Used by the importance-sampling variant: particles are drawn from an
/// approximation while the path still starts at the prior, so the first
/// weights become prior / approximation instead of 1.
pub trait InitOverride<S>: Sync {
    fn sample_init(&self, rng: &mut SubRng) -> S;
    fn log_init_density(&self, state: &S) -> f64;
}

/// Any bridge target can seed another target over the same state space,
/// drawing from its own start distribution.
impl<T: BridgeTarget> InitOverride<T::State> for T {
    fn sample_init(&self, rng: &mut SubRng) -> T::State {
        self.sample_approx(rng)
    }

    fn log_init_density(&self, state: &T::State) -> f64 {
        self.log_approx(state)
    }
}

/// Everything a finished run produces.
#[derive(Debug, Clone)]
pub struct SamplerOutput<S> {
    pub final_cloud: ParticleCloud<S>,
    pub trace: TemperingTrace,
    pub log_evidence_product: f64,
    pub log_evidence_path: f64,
    /// Seconds spent inside the sampler.
    pub wall_time: f64,
}

/// Runs the bridge sampler from the target's own start distribution.
pub fn run_sbs<T: BridgeTarget>(
    target: &T,
    config: &SamplerConfig,
) -> Result<SamplerOutput<T::State>> {
    run_sbs_with_init::<T>(target, None, config)
}

/// Runs the bridge sampler, optionally drawing the initial cloud from a
/// different distribution with importance correction.
pub fn run_sbs_with_init<T: BridgeTarget>(
    target: &T,
    init: Option<&dyn InitOverride<T::State>>,
    config: &SamplerConfig,
) -> Result<SamplerOutput<T::State>> {
    config.validate()?;
    let start = Instant::now();
    let m = config.particles;
    let seed = config.master_seed;

    let drawn: Vec<(T::State, f64, f64)> = (0..m)
        .into_par_iter()
        .map(|i| {
            let mut rng = substream(seed, 0, i as u64);
            let state = match init {
                Some(q) => q.sample_init(&mut rng),
                None => target.sample_approx(&mut rng),
            };
            let log_w = match init {
                Some(q) => target.log_approx(&state) - q.log_init_density(&state),
                None => 0.0,
            };
            let la = target.log_alpha_of(&state);
            (state, log_w, la)
        })
        .collect();
    let mut particles = Vec::with_capacity(m);
    let mut log_weights = Vec::with_capacity(m);
    let mut log_alpha = Vec::with_capacity(m);
    for (i, (state, lw, la)) in drawn.into_iter().enumerate() {
        for v in [lw, la] {
            if v.is_nan() || v == f64::INFINITY {
                return Err(SbsError::NonFiniteDensity { index: i, value: v });
            }
        }
        particles.push(state);
        log_weights.push(lw);
        log_alpha.push(la);
    }
    let log_sum0 = logsumexp(&log_weights);
    let mut cloud = ParticleCloud::new(particles, log_weights, log_alpha)?;

    let mut trace = TemperingTrace::new();
    trace.init_log_ratio = log_sum0 - (m as f64).ln();
    trace.init_ess = ess(&cloud.norm_weights);
    trace
        .u_seq
        .push(weighted_u(&cloud.norm_weights, &cloud.log_alpha));

    let mut rho = 0.0;
    let mut h = 0usize;
    while rho < 1.0 {
        h += 1;
        if h > config.max_steps {
            return Err(SbsError::Stalled(config.max_steps));
        }
        let rho_new = next_rho(&cloud, rho, config)?;
        let delta = rho_new - rho;
        let cess_val = cess(&cloud.norm_weights, &cloud.log_alpha, delta)?;

        // evidence increment, from the weights and alphas of the previous
        // generation
        let step_terms: Vec<f64> = cloud
            .norm_weights
            .iter()
            .zip(&cloud.log_alpha)
            .map(|(&w, &la)| w.ln() + delta * la)
            .collect();
        let step_log_ratio = logsumexp(&step_terms);

        reweight(&mut cloud, delta)?;
        let ess_val = ess(&cloud.norm_weights);
        let did_resample = ess_val < config.tau2 * m as f64;
        if did_resample {
            let mut rng = substream(seed, h as u64, RESAMPLE_SLOT);
            cloud = resample_multinomial(&cloud, &mut rng);
        }

        let moved: Vec<(T::State, f64)> = cloud
            .particles
            .par_iter()
            .enumerate()
            .map(|(i, s)| {
                let mut state = s.clone();
                let mut rng = substream(seed, h as u64, i as u64);
                for _ in 0..config.mcmc_sweeps {
                    target.move_kernel(&mut state, rho_new, &mut rng);
                }
                let la = target.log_alpha_of(&state);
                (state, la)
            })
            .collect();
        for (i, (_, la)) in moved.iter().enumerate() {
            if la.is_nan() || *la == f64::INFINITY {
                return Err(SbsError::NonFiniteDensity {
                    index: i,
                    value: *la,
                });
            }
        }
        for (i, (state, la)) in moved.into_iter().enumerate() {
            cloud.particles[i] = state;
            cloud.log_alpha[i] = la;
        }

        trace.rho_seq.push(rho_new);
        trace.cess_seq.push(cess_val);
        trace.ess_seq.push(ess_val);
        trace.resampled.push(did_resample);
        trace.step_log_ratio.push(step_log_ratio);
        trace
            .u_seq
            .push(weighted_u(&cloud.norm_weights, &cloud.log_alpha));
        if delta <= config.rho_tolerance {
            trace.slow_steps += 1;
        }
        rho = rho_new;
    }

    let log_evidence_product = evidence_product(&trace)?;
    let log_evidence_path = evidence_path(&trace)?;
    Ok(SamplerOutput {
        final_cloud: cloud,
        trace,
        log_evidence_product,
        log_evidence_path,
        wall_time: start.elapsed().as_secs_f64(),
    })
}

/// Weighted mean of log alpha; zero-weight particles contribute nothing
/// even when their alpha vanishes.
fn weighted_u(norm_weights: &[f64], log_alpha: &[f64]) -> f64 {
    norm_weights
        .iter()
        .zip(log_alpha)
        .filter(|(&w, _)| w > 0.0)
        .map(|(&w, &la)| w * la)
        .sum()
}
