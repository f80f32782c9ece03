//! Step-size adaptation: conditional ESS and the bisection search for
//! the next tempering exponent.

use super::{ParticleCloud, SamplerConfig};
use crate::error::{Result, SbsError};
use crate::math::logsumexp;

/// Conditional effective sample size of a candidate increment.
///
/// For weights W and ratios alpha this is M (Σ W α^Δ)² / (Σ W α^{2Δ}),
/// evaluated in log space. It equals M at Δ = 0 and never exceeds M.
pub fn cess(norm_weights: &[f64], log_alpha: &[f64], delta_rho: f64) -> Result<f64> {
    debug_assert_eq!(norm_weights.len(), log_alpha.len());
    debug_assert!(delta_rho >= 0.0);
    let m = norm_weights.len() as f64;
    if delta_rho == 0.0 {
        return Ok(m);
    }
    let first: Vec<f64> = norm_weights
        .iter()
        .zip(log_alpha)
        .map(|(&w, &la)| w.ln() + delta_rho * la)
        .collect();
    let second: Vec<f64> = norm_weights
        .iter()
        .zip(log_alpha)
        .map(|(&w, &la)| w.ln() + 2.0 * delta_rho * la)
        .collect();
    let l1 = logsumexp(&first);
    let l2 = logsumexp(&second);
    if l1 == f64::NEG_INFINITY {
        // every particle with positive weight has alpha = 0
        return Err(SbsError::DegenerateCloud);
    }
    Ok((m.ln() + 2.0 * l1 - l2).exp().min(m))
}

/// Largest admissible next exponent: 1 if the full remaining jump keeps
/// cESS above `tau1 * M`, otherwise the bisection solution of
/// cESS(rho) = tau1 * M on (rho_prev, 1).
///
/// The increment is floored at `rho_tolerance` so the sampler always
/// advances; hitting that floor logs a slow-progress warning.
pub fn next_rho<S>(
    cloud: &ParticleCloud<S>,
    rho_prev: f64,
    config: &SamplerConfig,
) -> Result<f64> {
    debug_assert!((0.0..1.0).contains(&rho_prev));
    let target = config.tau1 * cloud.len() as f64;
    let remaining = 1.0 - rho_prev;
    if cess(&cloud.norm_weights, &cloud.log_alpha, remaining)? >= target {
        return Ok(1.0);
    }
    // cess(0) = M >= target, cess(remaining) < target: bisect the crossing
    let mut lo = 0.0;
    let mut hi = remaining;
    for _ in 0..config.bisection_iters {
        let mid = 0.5 * (lo + hi);
        if cess(&cloud.norm_weights, &cloud.log_alpha, mid)? >= target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < config.rho_tolerance {
            break;
        }
    }
    if lo < config.rho_tolerance {
        log::warn!(
            "tempering stalled near rho = {rho_prev:.6}: cESS drops below \
             {target:.1} within {:.1e}; advancing by the minimum increment",
            config.rho_tolerance
        );
    }
    let delta = lo.max(config.rho_tolerance);
    Ok((rho_prev + delta).min(1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::PathVariant;
    use proptest::prelude::*;

    fn two_particle_cloud() -> ParticleCloud<usize> {
        ParticleCloud::new(vec![0, 1], vec![0.0, 0.0], vec![0.0, 1.0]).unwrap()
    }

    fn config(tau1: f64) -> SamplerConfig {
        SamplerConfig {
            particles: 2,
            tau1,
            tau2: 0.5,
            mcmc_sweeps: 1,
            master_seed: 0,
            path_variant: PathVariant::Sbs,
            ..SamplerConfig::default()
        }
    }

    #[test]
    fn cess_is_m_at_zero_delta() {
        let w = [0.2, 0.3, 0.5];
        let la = [-4.0, 2.0, 0.7];
        assert_eq!(cess(&w, &la, 0.0).unwrap(), 3.0);
    }

    #[test]
    fn cess_is_m_for_constant_alpha() {
        let w = [0.2, 0.3, 0.5];
        let la = [1.3, 1.3, 1.3];
        for delta in [0.1, 0.5, 1.0] {
            assert!((cess(&w, &la, delta).unwrap() - 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn cess_hand_value() {
        // M=2, uniform weights, alpha = (1, e), delta = 1
        let w = [0.5, 0.5];
        let la = [0.0, 1.0];
        let e = std::f64::consts::E;
        let expect = 2.0 * (0.5 + 0.5 * e).powi(2) / (0.5 + 0.5 * e * e);
        let got = cess(&w, &la, 1.0).unwrap();
        assert!((got - expect).abs() < 1e-12);
        assert!((got - 1.648).abs() < 1e-3);
    }

    #[test]
    fn cess_errors_when_support_collapses() {
        let w = [0.0, 1.0];
        let la = [0.0, f64::NEG_INFINITY];
        assert!(matches!(
            cess(&w, &la, 0.5),
            Err(SbsError::DegenerateCloud)
        ));
    }

    #[test]
    fn next_rho_jumps_to_one_for_constant_alpha() {
        let cloud = ParticleCloud::new(vec![0, 1], vec![0.0, 0.0], vec![2.2, 2.2]).unwrap();
        assert_eq!(next_rho(&cloud, 0.0, &config(0.9)).unwrap(), 1.0);
    }

    #[test]
    fn next_rho_solves_hand_case() {
        // (1 + e^d)^2 / (1 + e^{2d}) = 1.8 has the root d = ln 2
        let cloud = two_particle_cloud();
        let got = next_rho(&cloud, 0.0, &config(0.9)).unwrap();
        assert!(
            (got - std::f64::consts::LN_2).abs() < 1e-8,
            "expected ln 2, got {got}"
        );
    }

    #[test]
    fn next_rho_caps_at_one() {
        // from rho = 0.5 the remaining jump keeps cESS above 1.8
        let cloud = two_particle_cloud();
        assert_eq!(next_rho(&cloud, 0.5, &config(0.9)).unwrap(), 1.0);
    }

    #[test]
    fn next_rho_meets_threshold_when_interior() {
        let cloud = two_particle_cloud();
        let cfg = config(0.9);
        let rho = next_rho(&cloud, 0.0, &cfg).unwrap();
        assert!(rho > 0.0 && rho < 1.0);
        let c = cess(&cloud.norm_weights, &cloud.log_alpha, rho).unwrap();
        assert!(c >= cfg.tau1 * 2.0 - 1e-6, "cESS {c} below target");
    }

    #[test]
    fn next_rho_advances_at_least_tolerance() {
        // tau1 = 1 with an enormous alpha spread: cESS drops below M for
        // any representable increment, so only the floor keeps progress
        let cloud =
            ParticleCloud::new(vec![0, 1], vec![0.0, 0.0], vec![0.0, -1e6]).unwrap();
        let cfg = config(1.0);
        let rho = next_rho(&cloud, 0.0, &cfg).unwrap();
        assert_eq!(rho, cfg.rho_tolerance);
    }

    proptest! {
        #[test]
        fn cess_never_exceeds_m(
            raw in proptest::collection::vec((0.01f64..10.0, -5.0f64..5.0), 2..40),
            delta in 0.0f64..2.0,
        ) {
            let total: f64 = raw.iter().map(|(w, _)| w).sum();
            let w: Vec<f64> = raw.iter().map(|(v, _)| v / total).collect();
            let la: Vec<f64> = raw.iter().map(|(_, a)| *a).collect();
            let c = cess(&w, &la, delta).unwrap();
            prop_assert!(c > 0.0);
            prop_assert!(c <= w.len() as f64 + 1e-9);
        }

        #[test]
        fn next_rho_always_advances(
            raw in proptest::collection::vec((0.01f64..10.0, -5.0f64..5.0), 2..40),
            rho_prev in 0.0f64..0.999,
        ) {
            let total: f64 = raw.iter().map(|(w, _)| w).sum();
            let w: Vec<f64> = raw.iter().map(|(v, _)| v / total).collect();
            let la: Vec<f64> = raw.iter().map(|(_, a)| *a).collect();
            let n = raw.len();
            let cloud = ParticleCloud::new(
                (0..n).collect(),
                w.iter().map(|x| x.ln()).collect(),
                la,
            ).unwrap();
            let cfg = SamplerConfig { particles: n, ..SamplerConfig::default() };
            let rho = next_rho(&cloud, rho_prev, &cfg).unwrap();
            prop_assert!(rho > rho_prev);
            prop_assert!(rho <= 1.0);
        }
    }
}
