//! Weighted particle clouds and the operations that act on whole clouds.

use crate::error::{Result, SbsError};
use crate::math::logsumexp;
use crate::rng::SubRng;
use rand::Rng;

/// A population of M particles with log-scale weights.
///
/// `norm_weights` is always the softmax of `log_weights`, and `log_alpha`
/// holds each particle's log(lik * prior / approx), the driver of both
/// reweighting and step-size adaptation.
#[derive(Debug, Clone)]
pub struct ParticleCloud<S> {
    pub particles: Vec<S>,
    pub log_weights: Vec<f64>,
    pub norm_weights: Vec<f64>,
    pub log_alpha: Vec<f64>,
}

impl<S> ParticleCloud<S> {
    /// Builds a cloud and normalizes its weights.
    pub fn new(particles: Vec<S>, log_weights: Vec<f64>, log_alpha: Vec<f64>) -> Result<Self> {
        debug_assert_eq!(particles.len(), log_weights.len());
        debug_assert_eq!(particles.len(), log_alpha.len());
        let (norm_weights, _) = normalize_log_weights(&log_weights)?;
        Ok(ParticleCloud {
            particles,
            log_weights,
            norm_weights,
            log_alpha,
        })
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    /// Recomputes `norm_weights` from `log_weights`, returning the
    /// log-sum-exp of the raw weights.
    pub fn renormalize(&mut self) -> Result<f64> {
        let (w, log_sum) = normalize_log_weights(&self.log_weights)?;
        self.norm_weights = w;
        Ok(log_sum)
    }
}

/// Softmax of log weights plus their log-sum-exp.
///
/// Invariant to shifting all inputs by a constant. Fails if the slice is
/// empty or every entry is -inf, which means the cloud has collapsed.
pub fn normalize_log_weights(log_weights: &[f64]) -> Result<(Vec<f64>, f64)> {
    if log_weights.is_empty() {
        return Err(SbsError::InvalidConfig(
            "cannot normalize an empty weight vector".into(),
        ));
    }
    let log_sum = logsumexp(log_weights);
    if log_sum == f64::NEG_INFINITY {
        return Err(SbsError::DegenerateCloud);
    }
    if !log_sum.is_finite() {
        return Err(SbsError::NonFiniteDensity {
            index: log_weights
                .iter()
                .position(|w| !w.is_finite() && *w != f64::NEG_INFINITY)
                .unwrap_or(0),
            value: log_sum,
        });
    }
    let m = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let unnorm: Vec<f64> = log_weights.iter().map(|&w| (w - m).exp()).collect();
    let total: f64 = unnorm.iter().sum();
    let norm = unnorm.iter().map(|&u| u / total).collect();
    Ok((norm, log_sum))
}

/// Effective sample size 1 / sum(W^2) of normalized weights.
pub fn ess(norm_weights: &[f64]) -> f64 {
    let s: f64 = norm_weights.iter().map(|&w| w * w).sum();
    1.0 / s
}

/// Raises each particle's weight by its alpha to the power `delta_rho`
/// and renormalizes. The alphas must belong to the previous generation:
/// the incremental weight of the bridge path does not depend on the
/// current position.
pub fn reweight<S>(cloud: &mut ParticleCloud<S>, delta_rho: f64) -> Result<()> {
    debug_assert!(delta_rho >= 0.0);
    if delta_rho == 0.0 {
        // also dodges 0 * (-inf) = NaN for zero-likelihood particles
        return Ok(());
    }
    for (w, &la) in cloud.log_weights.iter_mut().zip(&cloud.log_alpha) {
        *w += delta_rho * la;
    }
    cloud.renormalize()?;
    Ok(())
}

/// Draws M particles i.i.d. from the categorical distribution given by
/// the normalized weights, then resets all weights to uniform.
pub fn resample_multinomial<S: Clone>(cloud: &ParticleCloud<S>, rng: &mut SubRng) -> ParticleCloud<S> {
    let m = cloud.len();
    let mut cum = Vec::with_capacity(m);
    let mut acc = 0.0;
    for &w in &cloud.norm_weights {
        acc += w;
        cum.push(acc);
    }
    // guard against cumulative rounding leaving the last bin short
    if let Some(last) = cum.last_mut() {
        *last = 1.0;
    }
    let mut particles = Vec::with_capacity(m);
    let mut log_alpha = Vec::with_capacity(m);
    for _ in 0..m {
        let u: f64 = rng.random();
        let idx = cum.partition_point(|&c| c < u).min(m - 1);
        particles.push(cloud.particles[idx].clone());
        log_alpha.push(cloud.log_alpha[idx]);
    }
    ParticleCloud {
        particles,
        log_weights: vec![0.0; m],
        norm_weights: vec![1.0 / m as f64; m],
        log_alpha,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn dummy_cloud(log_weights: Vec<f64>, log_alpha: Vec<f64>) -> ParticleCloud<usize> {
        let n = log_weights.len();
        ParticleCloud::new((0..n).collect(), log_weights, log_alpha).unwrap()
    }

    #[test]
    fn normalize_uniform_case() {
        let (w, log_sum) = normalize_log_weights(&[0.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(w, vec![0.25; 4]);
        assert!((log_sum - (4.0f64).ln()).abs() < 1e-15);
    }

    #[test]
    fn normalize_two_point_case() {
        let (w, log_sum) = normalize_log_weights(&[0.0, (3.0f64).ln()]).unwrap();
        assert!((w[0] - 0.25).abs() < 1e-14);
        assert!((w[1] - 0.75).abs() < 1e-14);
        assert!((log_sum - (4.0f64).ln()).abs() < 1e-14);
    }

    #[test]
    fn normalize_singleton() {
        let (w, log_sum) = normalize_log_weights(&[-3.7]).unwrap();
        assert_eq!(w, vec![1.0]);
        assert!((log_sum + 3.7).abs() < 1e-15);
    }

    #[test]
    fn normalize_is_shift_invariant() {
        let base = [0.3, -1.2, 2.0, -0.5];
        let shifted: Vec<f64> = base.iter().map(|x| x + 123.456).collect();
        let (w0, _) = normalize_log_weights(&base).unwrap();
        let (w1, _) = normalize_log_weights(&shifted).unwrap();
        for (a, b) in w0.iter().zip(&w1) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn normalize_rejects_total_collapse() {
        let r = normalize_log_weights(&[f64::NEG_INFINITY, f64::NEG_INFINITY]);
        assert!(matches!(r, Err(SbsError::DegenerateCloud)));
    }

    #[test]
    fn normalize_tolerates_partial_collapse() {
        let (w, _) = normalize_log_weights(&[f64::NEG_INFINITY, 0.0]).unwrap();
        assert_eq!(w, vec![0.0, 1.0]);
    }

    #[test]
    fn ess_hand_values() {
        assert!((ess(&vec![0.01; 100]) - 100.0).abs() < 1e-9);
        assert!((ess(&[1.0, 0.0, 0.0]) - 1.0).abs() < 1e-15);
        let e = ess(&[0.5, 0.25, 0.25]);
        assert!((e - 1.0 / 0.375).abs() < 1e-12, "got {e}");
        assert!((e - 2.6667).abs() < 1e-4);
    }

    #[test]
    fn reweight_noop_at_zero_delta() {
        let mut cloud = dummy_cloud(vec![0.0, 0.5], vec![f64::NEG_INFINITY, 1.0]);
        let before = cloud.norm_weights.clone();
        reweight(&mut cloud, 0.0).unwrap();
        assert_eq!(cloud.norm_weights, before);
        assert!(cloud.norm_weights.iter().all(|w| w.is_finite()));
    }

    #[test]
    fn reweight_half_step_case() {
        let mut cloud = dummy_cloud(vec![0.0, 0.0], vec![0.0, 1.0]);
        reweight(&mut cloud, 0.5).unwrap();
        let z = 1.0 + (0.5f64).exp();
        assert!((cloud.norm_weights[0] - 1.0 / z).abs() < 1e-12);
        assert!((cloud.norm_weights[1] - (0.5f64).exp() / z).abs() < 1e-12);
        assert!((cloud.norm_weights[0] - 0.3775).abs() < 1e-4);
        assert!((cloud.norm_weights[1] - 0.6225).abs() < 1e-4);
    }

    #[test]
    fn reweight_singleton_stays_unit() {
        let mut cloud = dummy_cloud(vec![0.0], vec![-2.0]);
        reweight(&mut cloud, 0.7).unwrap();
        assert_eq!(cloud.norm_weights, vec![1.0]);
    }

    #[test]
    fn resample_one_hot_copies_single_particle() {
        let mut cloud = dummy_cloud(
            vec![f64::NEG_INFINITY, 0.0, f64::NEG_INFINITY],
            vec![0.1, 0.2, 0.3],
        );
        cloud.renormalize().unwrap();
        let out = resample_multinomial(&cloud, &mut seeded(1));
        assert!(out.particles.iter().all(|&p| p == 1));
        assert!(out.norm_weights.iter().all(|&w| (w - 1.0 / 3.0).abs() < 1e-15));
        assert!(out.log_weights.iter().all(|&w| w == 0.0));
        assert!(out.log_alpha.iter().all(|&a| a == 0.2));
    }

    #[test]
    fn resample_counts_match_binomial_oracle() {
        // two particle classes carrying total mass 0.7 and 0.3; class counts
        // after one multinomial resample are Binomial(M, 0.7)
        let m = 10_000;
        let half = m / 2;
        let mut particles = vec![0usize; half];
        particles.extend(vec![1usize; half]);
        let mut log_w = vec![(0.7 / half as f64).ln(); half];
        log_w.extend(vec![(0.3 / half as f64).ln(); half]);
        let cloud = ParticleCloud::new(particles, log_w, vec![0.0; m]).unwrap();
        let out = resample_multinomial(&cloud, &mut seeded(42));
        let got = out.particles.iter().filter(|&&p| p == 0).count() as f64;
        let expect = 0.7 * m as f64;
        let sd = (m as f64 * 0.7 * 0.3).sqrt();
        assert!(
            (got - expect).abs() < 4.0 * sd,
            "count {got} vs expectation {expect} (sd {sd})"
        );
    }

    #[test]
    fn resample_preserves_expectations() {
        // weighted mean before resampling vs unweighted mean after, averaged
        // over repeated resamplings of the same fixed cloud
        let values = [1.0, 4.0, -2.0, 0.5, 3.0];
        let log_w = [0.0, 1.0, -0.5, 0.3, 0.9];
        let cloud = ParticleCloud::new(values.to_vec(), log_w.to_vec(), vec![0.0; 5]).unwrap();
        let target: f64 = values
            .iter()
            .zip(&cloud.norm_weights)
            .map(|(&v, &w)| v * w)
            .sum();
        let reps = 1000;
        let mut rng = seeded(7);
        let mut means = Vec::with_capacity(reps);
        for _ in 0..reps {
            let out = resample_multinomial(&cloud, &mut rng);
            means.push(out.particles.iter().sum::<f64>() / out.len() as f64);
        }
        let grand = means.iter().sum::<f64>() / reps as f64;
        let var = means.iter().map(|m| (m - grand) * (m - grand)).sum::<f64>() / reps as f64;
        let se = (var / reps as f64).sqrt();
        assert!(
            (grand - target).abs() < 4.0 * se,
            "resampled mean {grand} vs weighted mean {target} (se {se})"
        );
    }
}
