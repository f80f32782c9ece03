//! Gaussian fits for Bayesian logistic regression: a variational bound
//! fit and a maximum likelihood fit.

use super::GaussianApprox;
use crate::error::{Result, SbsError};
use crate::math::{log1pexp, log_sigmoid, sigmoid};
use nalgebra::{DMatrix, DVector};

const VB_TOL: f64 = 1e-8;
const VB_MAX_ITERS: usize = 500;
const ML_MAX_ITERS: usize = 100;

/// Variational Gaussian fit under the prior N(0, prior_var I).
///
/// Uses the local quadratic bound on log(1 + e^t): with bound parameters
/// xi and lam(xi) = tanh(xi/2)/(4 xi), the optimal Gaussian has
/// precision I/prior_var + 2 Σ lam_i x_i x_iᵀ and mean solving against
/// Σ (y_i - 1/2) x_i, and the xi update is xi_i² = x_iᵀ(Σ + μμᵀ)x_i.
/// Iterating these is coordinate ascent on the bound, so the ELBO is
/// non-decreasing.
pub fn fit_vb_logistic(x: &DMatrix<f64>, y: &[u8], prior_var: f64) -> Result<GaussianApprox> {
    fit_vb_logistic_traced(x, y, prior_var).map(|(g, _)| g)
}

/// Same fit, also returning the ELBO after every iteration.
pub(crate) fn fit_vb_logistic_traced(
    x: &DMatrix<f64>,
    y: &[u8],
    prior_var: f64,
) -> Result<(GaussianApprox, Vec<f64>)> {
    let (n, p) = (x.nrows(), x.ncols());
    check_inputs(x, y)?;
    if prior_var <= 0.0 {
        return Err(SbsError::InvalidConfig(format!(
            "prior variance must be positive, got {prior_var}"
        )));
    }
    if n == 0 {
        return Ok((GaussianApprox::isotropic(p, prior_var)?, Vec::new()));
    }

    let b = {
        let mut b = DVector::zeros(p);
        for i in 0..n {
            let r = x.row(i).transpose();
            b += (y[i] as f64 - 0.5) * r;
        }
        b
    };

    let mut xi = vec![1.0f64; n];
    let mut elbo_prev = f64::NEG_INFINITY;
    let mut elbos = Vec::new();
    for iter in 1..=VB_MAX_ITERS {
        let mut prec = DMatrix::identity(p, p) / prior_var;
        for i in 0..n {
            let r = x.row(i).transpose();
            prec += 2.0 * lambda(xi[i]) * &r * r.transpose();
        }
        let chol = nalgebra::Cholesky::new(prec.clone())
            .ok_or_else(|| SbsError::InvalidData("variational precision not PD".into()))?;
        let cov = chol.inverse();
        let mean = chol.solve(&b);

        let second_moment = &cov + &mean * mean.transpose();
        for i in 0..n {
            let r = x.row(i).transpose();
            xi[i] = r.dot(&(&second_moment * &r)).max(0.0).sqrt();
        }

        let log_det_prec: f64 = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        let mut elbo = -0.5 * log_det_prec - 0.5 * p as f64 * prior_var.ln()
            + 0.5 * mean.dot(&b);
        for &xv in &xi {
            elbo += log_sigmoid(xv) - 0.5 * xv + lambda(xv) * xv * xv;
        }
        elbos.push(elbo);
        let delta = elbo - elbo_prev;
        if delta.abs() < VB_TOL {
            return Ok((GaussianApprox::new(mean, cov)?, elbos));
        }
        if iter == VB_MAX_ITERS {
            return Err(SbsError::NoConvergence { iters: iter, delta });
        }
        elbo_prev = elbo;
    }
    unreachable!("loop either returns or errors at the last iteration")
}

/// Maximum likelihood fit with the inverse observed information as
/// covariance. No prior enters: this is the frequentist start point.
pub fn fit_ml_logistic(x: &DMatrix<f64>, y: &[u8]) -> Result<GaussianApprox> {
    let (n, p) = (x.nrows(), x.ncols());
    check_inputs(x, y)?;
    if n == 0 {
        return Err(SbsError::InvalidData(
            "maximum likelihood fit needs at least one observation".into(),
        ));
    }

    let log_lik = |theta: &DVector<f64>| -> f64 {
        let mut ll = 0.0;
        for i in 0..n {
            let eta = x.row(i).transpose().dot(theta);
            ll += y[i] as f64 * eta - log1pexp(eta);
        }
        ll
    };

    let mut theta = DVector::zeros(p);
    let mut ll = log_lik(&theta);
    for _ in 0..ML_MAX_ITERS {
        let mut grad = DVector::zeros(p);
        let mut info = DMatrix::zeros(p, p);
        for i in 0..n {
            let r = x.row(i).transpose();
            let prob = sigmoid(r.dot(&theta));
            grad += (y[i] as f64 - prob) * &r;
            info += prob * (1.0 - prob) * &r * r.transpose();
        }
        if grad.amax() < 1e-10 {
            // a vanishing deviance means every point is classified with
            // certainty, which no finite coefficient vector achieves
            if ll > -1e-8 {
                return Err(SbsError::Separation);
            }
            let chol = nalgebra::Cholesky::new(info.clone())
                .ok_or(SbsError::Separation)?;
            return GaussianApprox::new(theta, chol.inverse());
        }
        let chol = nalgebra::Cholesky::new(info).ok_or(SbsError::Separation)?;
        let mut step = chol.solve(&grad);
        // logistic likelihood is concave; halve overshooting steps
        let mut halvings = 0;
        loop {
            let cand = &theta + &step;
            let cand_ll = log_lik(&cand);
            if cand_ll >= ll {
                theta = cand;
                ll = cand_ll;
                break;
            }
            step *= 0.5;
            halvings += 1;
            if halvings > 40 {
                return Err(SbsError::NoConvergence {
                    iters: ML_MAX_ITERS,
                    delta: cand_ll - ll,
                });
            }
        }
        if theta.amax() > 20.0 {
            // coefficients this large on unit-scale covariates mean some
            // direction is running away
            return Err(SbsError::Separation);
        }
    }
    Err(SbsError::NoConvergence {
        iters: ML_MAX_ITERS,
        delta: f64::NAN,
    })
}

/// The bound coefficient tanh(xi/2) / (4 xi), continuous at 0.
pub(crate) fn lambda(xi: f64) -> f64 {
    if xi.abs() < 1e-8 {
        0.125
    } else {
        (xi / 2.0).tanh() / (4.0 * xi)
    }
}

fn check_inputs(x: &DMatrix<f64>, y: &[u8]) -> Result<()> {
    if x.nrows() != y.len() {
        return Err(SbsError::InvalidData(format!(
            "design has {} rows but response has {} entries",
            x.nrows(),
            y.len()
        )));
    }
    if y.iter().any(|&v| v > 1) {
        return Err(SbsError::InvalidData(
            "response entries must be 0 or 1".into(),
        ));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::{logit, normal_ln_pdf};
    use crate::rng::seeded;
    use rand::Rng;

    /// Fixed 1-D dataset: evenly spaced covariates, responses drawn once
    /// from theta = 0.8 with a pinned seed.
    fn oracle_dataset() -> (DMatrix<f64>, Vec<u8>) {
        let n = 50;
        let xs: Vec<f64> = (0..n).map(|i| -2.45 + 0.1 * i as f64).collect();
        let mut rng = seeded(123);
        let y: Vec<u8> = xs
            .iter()
            .map(|&x| u8::from(rng.random::<f64>() < sigmoid(0.8 * x)))
            .collect();
        (DMatrix::from_column_slice(n, 1, &xs), y)
    }

    /// Exact 1-D posterior summaries by Simpson quadrature, written
    /// directly from the model density (independent of the fitters).
    fn quadrature_posterior(
        xs: &DMatrix<f64>,
        y: &[u8],
        prior_var: f64,
    ) -> (f64, f64, f64) {
        let grid_n = 8000;
        let (lo, hi) = (-5.0, 5.0);
        let h = (hi - lo) / grid_n as f64;
        let log_post = |t: f64| -> f64 {
            let mut lp = normal_ln_pdf(t, 0.0, prior_var);
            for i in 0..xs.nrows() {
                let eta = xs[(i, 0)] * t;
                lp += y[i] as f64 * eta - log1pexp(eta);
            }
            lp
        };
        let values: Vec<f64> = (0..=grid_n).map(|i| log_post(lo + i as f64 * h)).collect();
        let vmax = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let dens: Vec<f64> = values.iter().map(|v| (v - vmax).exp()).collect();
        let simpson_w = |i: usize| -> f64 {
            if i == 0 || i == grid_n {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            }
        };
        let mut z = 0.0;
        let mut m1 = 0.0;
        let mut m2 = 0.0;
        for i in 0..=grid_n {
            let t = lo + i as f64 * h;
            let w = simpson_w(i) * dens[i];
            z += w;
            m1 += w * t;
            m2 += w * t * t;
        }
        let mean = m1 / z;
        let var = m2 / z - mean * mean;
        let mode_idx = values
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap()
            .0;
        (mean, var, lo + mode_idx as f64 * h)
    }

    #[test]
    fn vb_with_no_data_returns_prior() {
        let x = DMatrix::zeros(0, 3);
        let g = fit_vb_logistic(&x, &[], 100.0).unwrap();
        assert_eq!(g.mean(), &DVector::zeros(3));
        assert_eq!(g.covariance(), &(DMatrix::identity(3, 3) * 100.0));
    }

    #[test]
    fn vb_tracks_quadrature_posterior_in_one_dimension() {
        let (x, y) = oracle_dataset();
        let (qmean, qvar, _) = quadrature_posterior(&x, &y, 100.0);
        let vb = fit_vb_logistic(&x, &y, 100.0).unwrap();
        assert!(
            (vb.mean()[0] - qmean).abs() < 0.05,
            "VB mean {} vs quadrature {qmean}",
            vb.mean()[0]
        );
        assert!(
            vb.covariance()[(0, 0)] <= qvar + 1e-12,
            "VB variance {} should not exceed exact variance {qvar}",
            vb.covariance()[(0, 0)]
        );
    }

    #[test]
    fn vb_elbo_is_monotone() {
        let (x, y) = oracle_dataset();
        let (_, elbos) = fit_vb_logistic_traced(&x, &y, 100.0).unwrap();
        assert!(elbos.len() >= 2);
        for w in elbos.windows(2) {
            assert!(
                w[1] >= w[0] - 1e-8,
                "ELBO decreased: {} -> {}",
                w[0],
                w[1]
            );
        }
    }

    #[test]
    fn ml_tracks_quadrature_mode_and_dominates_vb_variance() {
        let (x, y) = oracle_dataset();
        let (_, qvar, qmode) = quadrature_posterior(&x, &y, 100.0);
        let ml = fit_ml_logistic(&x, &y).unwrap();
        let vb = fit_vb_logistic(&x, &y, 100.0).unwrap();
        assert!(
            (ml.mean()[0] - qmode).abs() < 0.05,
            "ML mean {} vs posterior mode {qmode}",
            ml.mean()[0]
        );
        assert!(vb.covariance()[(0, 0)] <= ml.covariance()[(0, 0)] + 1e-12);
        assert!(qvar > 0.0);
    }

    #[test]
    fn ml_intercept_only_closed_form() {
        let n = 20;
        let k = 13;
        let x = DMatrix::from_element(n, 1, 1.0);
        let mut y = vec![1u8; k];
        y.extend(vec![0u8; n - k]);
        let ml = fit_ml_logistic(&x, &y).unwrap();
        let phat = k as f64 / n as f64;
        assert!((ml.mean()[0] - logit(phat)).abs() < 1e-6);
        let var = 1.0 / (n as f64 * phat * (1.0 - phat));
        assert!((ml.covariance()[(0, 0)] - var).abs() < 1e-6);
    }

    #[test]
    fn ml_rejects_empty_data() {
        let x = DMatrix::zeros(0, 2);
        assert!(fit_ml_logistic(&x, &[]).is_err());
    }

    #[test]
    fn ml_detects_separation() {
        let x = DMatrix::from_column_slice(4, 1, &[-2.0, -1.0, 1.0, 2.0]);
        let y = vec![0u8, 0, 1, 1];
        assert!(matches!(
            fit_ml_logistic(&x, &y),
            Err(SbsError::Separation)
        ));
    }

    #[test]
    fn vb_variance_magnitude_on_standard_design() {
        // n=200, p=4 design with standard normal covariates: posterior
        // variances should land in the few-hundredths range
        let (n, p) = (200, 4);
        let theta_star = [0.5, -0.6, 0.0, -1.0];
        let mut rng = seeded(31);
        let x = DMatrix::from_fn(n, p, |_, _| {
            rng.sample::<f64, _>(rand_distr::StandardNormal)
        });
        let y: Vec<u8> = (0..n)
            .map(|i| {
                let eta: f64 = (0..p).map(|j| x[(i, j)] * theta_star[j]).sum();
                u8::from(rng.random::<f64>() < sigmoid(eta))
            })
            .collect();
        let vb = fit_vb_logistic(&x, &y, 100.0).unwrap();
        for j in 0..p {
            let v = vb.covariance()[(j, j)];
            assert!(
                (0.005..0.1).contains(&v),
                "variance {v} at coordinate {j} outside the expected range"
            );
        }
    }
}
