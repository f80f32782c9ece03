//! Rank statistic of a scalar functional against a posterior sample.

use crate::error::{Result, SbsError};

/// Weighted rank of `phi_star` within the sample: Σ_m W_m 1{Φ_m < Φ*},
/// with ties counted at half weight so that lattice-valued functionals
/// keep their uniformity under the null.
///
/// Weights must be normalized; pass uniform weights for plain samples.
pub fn u_statistic(phi_star: f64, phi_sample: &[f64], weights: &[f64]) -> Result<f64> {
    if phi_sample.is_empty() {
        return Err(SbsError::Calibration(
            "rank statistic of an empty sample".into(),
        ));
    }
    if phi_sample.len() != weights.len() {
        return Err(SbsError::Calibration(format!(
            "sample length {} does not match weight length {}",
            phi_sample.len(),
            weights.len()
        )));
    }
    let mut u = 0.0;
    for (&phi, &w) in phi_sample.iter().zip(weights) {
        if phi < phi_star {
            u += w;
        } else if phi == phi_star {
            u += 0.5 * w;
        }
    }
    // Summing normalized weights can land a few ulps outside [0, 1];
    // anything past rounding scale means the weights were not
    // normalized.
    if !(-1e-9..=1.0 + 1e-9).contains(&u) {
        return Err(SbsError::Calibration(format!(
            "rank statistic {u} outside [0, 1]; weights are not normalized"
        )));
    }
    Ok(u.clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn hand_cases() {
        let sample = [1.0, 2.0, 3.0, 4.0];
        let w = [0.25; 4];
        assert_eq!(u_statistic(2.5, &sample, &w).unwrap(), 0.5);
        assert_eq!(u_statistic(0.0, &sample, &w).unwrap(), 0.0);
        assert_eq!(u_statistic(9.0, &sample, &w).unwrap(), 1.0);
    }

    #[test]
    fn ties_count_half() {
        let sample = [1.0, 2.0, 2.0, 3.0];
        let w = [0.25; 4];
        // one below, two tied at half weight each
        assert_eq!(u_statistic(2.0, &sample, &w).unwrap(), 0.5);
    }

    #[test]
    fn weights_drive_the_rank() {
        let sample = [0.0, 10.0];
        let w = [0.9, 0.1];
        assert!((u_statistic(5.0, &sample, &w).unwrap() - 0.9).abs() < 1e-15);
    }

    #[test]
    fn empty_sample_errors() {
        assert!(u_statistic(0.0, &[], &[]).is_err());
    }

    #[test]
    fn rounding_excess_clamps_to_one() {
        // normalized weights whose float sum exceeds 1 by a few ulps
        let sample = [1.0, 2.0];
        let w = [0.5, 0.5 + 4e-16];
        assert_eq!(u_statistic(9.0, &sample, &w).unwrap(), 1.0);
    }

    #[test]
    fn unnormalized_weights_error() {
        let sample = [1.0, 2.0];
        let w = [0.9, 0.6];
        assert!(u_statistic(9.0, &sample, &w).is_err());
    }

    proptest! {
        #[test]
        fn invariant_under_increasing_transforms(
            star in -3.0f64..3.0,
            sample in proptest::collection::vec(-3.0f64..3.0, 1..50),
        ) {
            let w = vec![1.0 / sample.len() as f64; sample.len()];
            let direct = u_statistic(star, &sample, &w).unwrap();
            let mapped: Vec<f64> = sample.iter().map(|v| v.exp()).collect();
            let transformed = u_statistic(star.exp(), &mapped, &w).unwrap();
            prop_assert!((direct - transformed).abs() < 1e-12);
        }
    }
}
