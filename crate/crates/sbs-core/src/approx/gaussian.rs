//! Multivariate Gaussian approximations with cached factorization.

use crate::error::{Result, SbsError};
use crate::rng::SubRng;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

/// A normalized Gaussian density N(mean, covariance).
///
/// The lower Cholesky factor and log-determinant are computed once at
/// construction, so density evaluation and sampling stay cheap inside
/// the particle loop.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "GaussianApproxRaw", into = "GaussianApproxRaw")]
pub struct GaussianApprox {
    mean: DVector<f64>,
    covariance: DMatrix<f64>,
    chol_lower: DMatrix<f64>,
    log_det: f64,
}

/// Serialized form: plain mean vector and row-major covariance.
#[derive(Serialize, Deserialize)]
struct GaussianApproxRaw {
    mean: Vec<f64>,
    covariance: Vec<Vec<f64>>,
}

impl TryFrom<GaussianApproxRaw> for GaussianApprox {
    type Error = SbsError;

    fn try_from(raw: GaussianApproxRaw) -> Result<Self> {
        let p = raw.mean.len();
        if raw.covariance.len() != p || raw.covariance.iter().any(|r| r.len() != p) {
            return Err(SbsError::InvalidData(
                "covariance shape does not match mean length".into(),
            ));
        }
        let flat: Vec<f64> = raw.covariance.into_iter().flatten().collect();
        GaussianApprox::new(
            DVector::from_vec(raw.mean),
            DMatrix::from_row_slice(p, p, &flat),
        )
    }
}

impl From<GaussianApprox> for GaussianApproxRaw {
    fn from(g: GaussianApprox) -> Self {
        let p = g.dim();
        GaussianApproxRaw {
            mean: g.mean.iter().copied().collect(),
            covariance: (0..p)
                .map(|i| (0..p).map(|j| g.covariance[(i, j)]).collect())
                .collect(),
        }
    }
}

/// How to distort a fitted Gaussian into a deliberately worse start.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Perturbation {
    /// Keep only the diagonal, dividing each variance by `factor`.
    DiagShrink { factor: f64 },
    /// Keep only the diagonal, multiplying each variance by `factor`.
    DiagInflate { factor: f64 },
    /// Shift every mean entry by `offset` and shrink diagonals by `factor`.
    Shift { offset: f64, factor: f64 },
}

impl GaussianApprox {
    pub fn new(mean: DVector<f64>, covariance: DMatrix<f64>) -> Result<Self> {
        let p = mean.len();
        if covariance.nrows() != p || covariance.ncols() != p {
            return Err(SbsError::InvalidData(format!(
                "covariance is {}x{}, expected {p}x{p}",
                covariance.nrows(),
                covariance.ncols()
            )));
        }
        let asym = (&covariance - covariance.transpose()).abs().max();
        if asym > 1e-10 {
            return Err(SbsError::InvalidData(format!(
                "covariance asymmetry {asym:.3e} exceeds 1e-10"
            )));
        }
        let sym = 0.5 * (&covariance + covariance.transpose());
        let chol = nalgebra::Cholesky::new(sym.clone()).ok_or_else(|| {
            SbsError::InvalidData("covariance is not positive definite".into())
        })?;
        let chol_lower = chol.l();
        let log_det = 2.0 * chol_lower.diagonal().iter().map(|d| d.ln()).sum::<f64>();
        Ok(GaussianApprox {
            mean,
            covariance: sym,
            chol_lower,
            log_det,
        })
    }

    /// N(0, var I) in `dim` dimensions.
    pub fn isotropic(dim: usize, var: f64) -> Result<Self> {
        Self::new(DVector::zeros(dim), DMatrix::identity(dim, dim) * var)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    /// Lower Cholesky factor of the covariance.
    pub fn chol_lower(&self) -> &DMatrix<f64> {
        &self.chol_lower
    }

    pub fn log_det(&self) -> f64 {
        self.log_det
    }

    pub fn log_density(&self, x: &DVector<f64>) -> f64 {
        let d = x - &self.mean;
        let z = self
            .chol_lower
            .solve_lower_triangular(&d)
            .expect("Cholesky factor is nonsingular by construction");
        let p = self.dim() as f64;
        -0.5 * (p * (2.0 * std::f64::consts::PI).ln() + self.log_det + z.norm_squared())
    }

    pub fn sample(&self, rng: &mut SubRng) -> DVector<f64> {
        let z = DVector::from_fn(self.dim(), |_, _| rng.sample::<f64, _>(StandardNormal));
        &self.mean + &self.chol_lower * z
    }

    /// Distorted copy of the approximation (diagonalized, rescaled,
    /// possibly shifted), used to study robustness to poor starts.
    pub fn perturb(&self, how: Perturbation) -> Result<Self> {
        let p = self.dim();
        let build = |mean: DVector<f64>, scale: f64, shrink: bool| {
            let mut cov = DMatrix::zeros(p, p);
            for i in 0..p {
                let v = self.covariance[(i, i)];
                cov[(i, i)] = if shrink { v / scale } else { v * scale };
            }
            GaussianApprox::new(mean, cov)
        };
        match how {
            Perturbation::DiagShrink { factor } => {
                check_positive(factor)?;
                build(self.mean.clone(), factor, true)
            }
            Perturbation::DiagInflate { factor } => {
                check_positive(factor)?;
                build(self.mean.clone(), factor, false)
            }
            Perturbation::Shift { offset, factor } => {
                check_positive(factor)?;
                build(self.mean.add_scalar(offset), factor, true)
            }
        }
    }
}

fn check_positive(factor: f64) -> Result<()> {
    if factor > 0.0 {
        Ok(())
    } else {
        Err(SbsError::InvalidConfig(format!(
            "perturbation factor must be positive, got {factor}"
        )))
    }
}
