//! Kolmogorov-Smirnov uniformity tests, including a lattice variant for
//! rank statistics that live on a finite grid.

use crate::error::{Result, SbsError};
use crate::rng::seeded;
use rand::Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Null draws used to calibrate the lattice test.
const LATTICE_NULL_DRAWS: usize = 10_000;
/// Fixed seed of the lattice null simulation, so p-values are reproducible.
const LATTICE_NULL_SEED: u64 = 0x6b73_7465_7374;

/// KS distance between the empirical CDF of `values` and the uniform CDF
/// on [0, 1].
fn ks_statistic_uniform(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in sorted.iter().enumerate() {
        let hi = (i + 1) as f64 / n - x;
        let lo = x - i as f64 / n;
        d = d.max(hi).max(lo);
    }
    d
}

/// Survival function of the Kolmogorov distribution,
/// Q(lambda) = 2 Σ_{j>=1} (-1)^{j-1} exp(-2 j² λ²).
fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for j in 1..=100 {
        let term = (-2.0 * (j as f64) * (j as f64) * lambda * lambda).exp();
        sum += sign * term;
        if term < 1e-12 {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Asymptotic p-value for a one-sample KS distance at sample size n,
/// with the standard small-sample correction of the scaling.
fn ks_pvalue_asymptotic(d: f64, n: usize) -> f64 {
    let sqrt_n = (n as f64).sqrt();
    let lambda = (sqrt_n + 0.12 + 0.11 / sqrt_n) * d;
    kolmogorov_q(lambda)
}

/// Tests whether `values` in [0, 1] look uniform.
///
/// With `lattice_size = None` the values are treated as continuous and
/// the p-value comes from the asymptotic Kolmogorov distribution. With
/// `Some(L)` the null hypothesis is the uniform distribution over the L
/// atoms {0, 1/(L-1), ..., 1} (for a rank statistic over M particles,
/// L = M + 1); the p-value is then calibrated by seeded Monte Carlo,
/// since ties make the continuous asymptotics invalid.
pub fn ks_uniform_test(values: &[f64], lattice_size: Option<usize>) -> Result<(f64, f64)> {
    if values.len() < 10 {
        return Err(SbsError::Calibration(format!(
            "KS test needs at least 10 values, got {}",
            values.len()
        )));
    }
    if values.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(SbsError::Calibration(
            "KS uniformity input outside [0, 1]".into(),
        ));
    }
    let d = ks_statistic_uniform(values);
    let p = match lattice_size {
        None => ks_pvalue_asymptotic(d, values.len()),
        Some(atoms) => {
            if atoms < 2 {
                return Err(SbsError::Calibration(format!(
                    "lattice needs at least 2 atoms, got {atoms}"
                )));
            }
            let mut rng = seeded(LATTICE_NULL_SEED);
            let spacing = 1.0 / (atoms - 1) as f64;
            let mut exceed = 0usize;
            let mut draw = vec![0.0; values.len()];
            for _ in 0..LATTICE_NULL_DRAWS {
                for slot in draw.iter_mut() {
                    *slot = rng.random_range(0..atoms) as f64 * spacing;
                }
                if ks_statistic_uniform(&draw) >= d {
                    exceed += 1;
                }
            }
            (1 + exceed) as f64 / (LATTICE_NULL_DRAWS + 1) as f64
        }
    };
    Ok((d, p))
}

/// Two-sample KS test with asymptotic p-value.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<(f64, f64)> {
    if a.len() < 10 || b.len() < 10 {
        return Err(SbsError::Calibration(
            "two-sample KS needs at least 10 values per sample".into(),
        ));
    }
    let mut xa = a.to_vec();
    let mut xb = b.to_vec();
    xa.sort_by(f64::total_cmp);
    xb.sort_by(f64::total_cmp);
    let (na, nb) = (xa.len(), xb.len());
    let mut d: f64 = 0.0;
    let (mut i, mut j) = (0usize, 0usize);
    while i < na && j < nb {
        let x = xa[i].min(xb[j]);
        while i < na && xa[i] <= x {
            i += 1;
        }
        while j < nb && xb[j] <= x {
            j += 1;
        }
        let fa = i as f64 / na as f64;
        let fb = j as f64 / nb as f64;
        d = d.max((fa - fb).abs());
    }
    let ne = (na as f64 * nb as f64) / (na + nb) as f64;
    let sqrt_ne = ne.sqrt();
    let lambda = (sqrt_ne + 0.12 + 0.11 / sqrt_ne) * d;
    Ok((d, kolmogorov_q(lambda)))
}

/// Chi-square goodness of fit of observed counts against expected
/// probabilities; returns (statistic, p-value) with k-1 degrees of
/// freedom.
pub fn chi2_gof_pvalue(observed_counts: &[f64], expected_probs: &[f64]) -> Result<(f64, f64)> {
    if observed_counts.len() != expected_probs.len() || observed_counts.len() < 2 {
        return Err(SbsError::Calibration(
            "chi-square needs matching lists with at least 2 cells".into(),
        ));
    }
    let total: f64 = observed_counts.iter().sum();
    let mut stat = 0.0;
    for (&obs, &p) in observed_counts.iter().zip(expected_probs) {
        let expect = total * p;
        if expect <= 0.0 {
            return Err(SbsError::Calibration(
                "expected cell count is zero; merge cells first".into(),
            ));
        }
        let diff = obs - expect;
        stat += diff * diff / expect;
    }
    let df = (observed_counts.len() - 1) as f64;
    let p = 1.0 - ChiSquared::new(df).unwrap().cdf(stat);
    Ok((stat, p))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_grid_has_minimal_distance() {
        let s = 100;
        let u: Vec<f64> = (1..=s).map(|i| (i as f64 - 0.5) / s as f64).collect();
        let (d, p) = ks_uniform_test(&u, None).unwrap();
        assert!((d - 0.5 / s as f64).abs() < 1e-12, "distance {d}");
        assert!(p > 0.99, "p-value {p}");
    }

    #[test]
    fn beta_sample_is_rejected() {
        // Beta(5,1) has CDF x^5; inverse-transform draws
        let mut rng = seeded(88);
        let u: Vec<f64> = (0..500)
            .map(|_| rng.random::<f64>().powf(0.2))
            .collect();
        let (_, p) = ks_uniform_test(&u, None).unwrap();
        assert!(p < 0.001, "p-value {p} should reject Beta(5,1)");
        let (_, p_lat) = ks_uniform_test(&u, Some(1001)).unwrap();
        assert!(p_lat < 0.001, "lattice p-value {p_lat} should also reject");
    }

    #[test]
    fn uniform_pvalues_are_themselves_uniform() {
        // meta-check: across replications the p-value should average 1/2
        let reps = 200;
        let mut rng = seeded(7);
        let mut ps = Vec::with_capacity(reps);
        for _ in 0..reps {
            let u: Vec<f64> = (0..500).map(|_| rng.random()).collect();
            ps.push(ks_uniform_test(&u, None).unwrap().1);
        }
        let mean = ps.iter().sum::<f64>() / reps as f64;
        let se = (1.0 / 12.0 / reps as f64).sqrt();
        assert!(
            (mean - 0.5).abs() < 4.0 * se,
            "mean p-value {mean} off uniform (se {se})"
        );
    }

    #[test]
    fn lattice_null_is_calibrated() {
        // draws that genuinely live on the lattice should not be rejected
        let mut rng = seeded(21);
        let atoms = 11;
        let u: Vec<f64> = (0..200)
            .map(|_| rng.random_range(0..atoms) as f64 / (atoms - 1) as f64)
            .collect();
        let (_, p_lat) = ks_uniform_test(&u, Some(atoms)).unwrap();
        assert!(p_lat > 0.05, "lattice p-value {p_lat} rejected a true null");
        // the continuous approximation underrates ties; the lattice test
        // must not inherit that conservatism
        let (_, p_cont) = ks_uniform_test(&u, None).unwrap();
        assert!(p_lat >= p_cont * 0.5);
    }

    #[test]
    fn small_samples_are_refused() {
        let u = vec![0.5; 9];
        assert!(ks_uniform_test(&u, None).is_err());
    }

    #[test]
    fn out_of_range_values_are_refused() {
        let u = vec![0.5, 1.2, 0.1, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];
        assert!(ks_uniform_test(&u, None).is_err());
    }

    #[test]
    fn two_sample_accepts_same_distribution() {
        let mut rng = seeded(3);
        let a: Vec<f64> = (0..1000).map(|_| rng.random::<f64>()).collect();
        let b: Vec<f64> = (0..800).map(|_| rng.random::<f64>()).collect();
        let (_, p) = ks_two_sample(&a, &b).unwrap();
        assert!(p > 0.01, "p-value {p}");
    }

    #[test]
    fn two_sample_rejects_shifted_distribution() {
        let mut rng = seeded(4);
        let a: Vec<f64> = (0..1000).map(|_| rng.random::<f64>()).collect();
        let b: Vec<f64> = (0..1000).map(|_| 0.2 + 0.8 * rng.random::<f64>()).collect();
        let (_, p) = ks_two_sample(&a, &b).unwrap();
        assert!(p < 1e-6, "p-value {p}");
    }

    #[test]
    fn chi2_detects_skewed_counts() {
        let (_, p_ok) = chi2_gof_pvalue(&[32.0, 35.0, 33.0], &[1.0 / 3.0; 3]).unwrap();
        assert!(p_ok > 0.1);
        let (_, p_bad) = chi2_gof_pvalue(&[70.0, 20.0, 10.0], &[1.0 / 3.0; 3]).unwrap();
        assert!(p_bad < 1e-6);
    }
}
