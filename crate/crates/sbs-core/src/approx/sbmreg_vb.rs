//! Variational approximation for the block model with dyad covariates.
//!
//! Mean-field factorization q(Z) q(pi) q(alpha, beta): categorical rows
//! tau_i for the node memberships, Dirichlet(delta~) for the proportions,
//! and one joint Gaussian over the block effects alpha (vectorized upper
//! triangle) and the regression coefficients beta. Logistic terms are
//! handled with the same local quadratic bound as the logistic fitter,
//! one bound parameter per dyad and block pair. Node memberships are
//! initialized by spectral clustering of the adjacency matrix.
//!
//! This fitter is a reconstruction: the model's published treatment does
//! not spell out its variational algorithm, so the scheme here is the
//! natural combination of the conjugate block-model updates with the
//! quadratic logistic bound. The fitted joint Gaussian is stored as its
//! alpha and beta marginals.

use super::logistic_vb::lambda;
use crate::approx::lca_vb::sample_dirichlet;
use crate::approx::GaussianApprox;
use crate::error::{Result, SbsError};
use crate::math::{dirichlet_ln_pdf, log_sigmoid, logsumexp};
use crate::models::sbmreg::{alpha_to_vec, vec_to_alpha, EdgeData, SbmRegHyper, SbmRegState};
use crate::rng::SubRng;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::digamma;

const ELBO_TOL: f64 = 1e-8;
const MAX_ITERS: usize = 500;

/// Variational posterior for the covariate block model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SbmRegVbApprox {
    /// Membership probabilities, n rows of g entries summing to 1.
    pub assign_probs: Vec<Vec<f64>>,
    /// Gaussian over the vectorized upper triangle of alpha.
    pub alpha_gauss: GaussianApprox,
    /// Gaussian over the regression coefficients.
    pub beta_gauss: GaussianApprox,
    /// Dirichlet parameters of q(pi).
    pub pi_dirichlet: Vec<f64>,
    /// Final value of the evidence lower bound, usable as a per-g
    /// evidence proxy.
    pub elbo: f64,
}

impl SbmRegVbApprox {
    pub fn n(&self) -> usize {
        self.assign_probs.len()
    }

    pub fn g(&self) -> usize {
        self.pi_dirichlet.len()
    }

    pub fn p(&self) -> usize {
        self.beta_gauss.dim()
    }

    pub fn log_density(&self, state: &SbmRegState) -> f64 {
        let mut lp = 0.0;
        for (i, &zi) in state.z.iter().enumerate() {
            lp += self.assign_probs[i][zi].ln();
        }
        lp + self.alpha_gauss.log_density(&alpha_to_vec(&state.alpha))
            + self.beta_gauss.log_density(&state.beta)
            + dirichlet_ln_pdf(&state.pi, &self.pi_dirichlet)
    }

    pub fn sample(&self, rng: &mut SubRng) -> SbmRegState {
        let g = self.g();
        let z = self
            .assign_probs
            .iter()
            .map(|row| {
                let u: f64 = rand::Rng::random::<f64>(rng);
                let mut acc = 0.0;
                for (k, &p) in row.iter().enumerate() {
                    acc += p;
                    if u < acc {
                        return k;
                    }
                }
                g - 1
            })
            .collect();
        SbmRegState {
            z,
            alpha: vec_to_alpha(g, &self.alpha_gauss.sample(rng)),
            beta: self.beta_gauss.sample(rng),
            pi: sample_dirichlet(&self.pi_dirichlet, rng),
        }
    }
}

/// Fits the variational approximation for a given number of groups.
pub fn fit_vb_sbmreg(data: &EdgeData, g: usize, hyper: &SbmRegHyper) -> Result<SbmRegVbApprox> {
    fit_vb_sbmreg_traced(data, g, hyper).map(|(a, _)| a)
}

/// Same fit, also returning the ELBO after every iteration.
pub(crate) fn fit_vb_sbmreg_traced(
    data: &EdgeData,
    g: usize,
    hyper: &SbmRegHyper,
) -> Result<(SbmRegVbApprox, Vec<f64>)> {
    hyper.validate()?;
    let n = data.n();
    let p = data.p();
    if g == 0 || g > n {
        return Err(SbsError::InvalidConfig(format!(
            "group count {g} must lie in 1..={n}"
        )));
    }
    let t = g * (g + 1) / 2;
    let r = t + p;
    let n_dyads = data.dyad_count();

    // prior variances per joint coordinate: alpha block then beta block
    let prior_vars: Vec<f64> = (0..r)
        .map(|c| if c < t { hyper.alpha_var } else { hyper.beta_var })
        .collect();

    let mut tau = spectral_init(data, g);
    let mut delta: Vec<f64> = vec![hyper.d; g];
    for row in &tau {
        for (k, &v) in row.iter().enumerate() {
            delta[k] += v;
        }
    }

    let mut xi = vec![vec![1.0f64; t]; n_dyads];
    let mut elbos = Vec::new();
    let mut elbo_prev = f64::NEG_INFINITY;

    // block-pair weight of a dyad: probability that nodes i and j fall
    // in the unordered pair (k, l) under q(Z)
    let pair_weights = |tau: &[Vec<f64>], i: usize, j: usize| -> Vec<f64> {
        let mut w = vec![0.0; t];
        for k in 0..g {
            for l in k..g {
                w[tri_index(g, k, l)] = if k == l {
                    tau[i][k] * tau[j][k]
                } else {
                    tau[i][k] * tau[j][l] + tau[i][l] * tau[j][k]
                };
            }
        }
        w
    };

    let mut result = None;
    for iter in 1..=MAX_ITERS {
        // joint Gaussian update given assignments and bound parameters
        let mut prec = DMatrix::<f64>::zeros(r, r);
        for (c, &v) in prior_vars.iter().enumerate() {
            prec[(c, c)] = 1.0 / v;
        }
        let mut b = DVector::<f64>::zeros(r);
        for (i, j, idx) in data.dyads() {
            let w = pair_weights(&tau, i, j);
            let shift = data.y(idx) as f64 - 0.5;
            let x = data.x(idx);
            for (c, &wc) in w.iter().enumerate() {
                if wc == 0.0 {
                    continue;
                }
                let lam2 = 2.0 * wc * lambda(xi[idx][c]);
                prec[(c, c)] += lam2;
                for (d1, &xd) in x.iter().enumerate() {
                    prec[(c, t + d1)] += lam2 * xd;
                    prec[(t + d1, c)] += lam2 * xd;
                    for (d2, &xe) in x.iter().enumerate() {
                        prec[(t + d1, t + d2)] += lam2 * xd * xe;
                    }
                }
                b[c] += wc * shift;
                for (d1, &xd) in x.iter().enumerate() {
                    b[t + d1] += wc * shift * xd;
                }
            }
        }
        let chol = nalgebra::Cholesky::new(prec.clone())
            .ok_or_else(|| SbsError::InvalidData("variational precision not PD".into()))?;
        let cov = chol.inverse();
        let m = chol.solve(&b);
        let log_det_prec: f64 = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();

        // bound parameters: xi² = E[(alpha_c + x'beta)²]
        let second = &cov + &m * m.transpose();
        for (_, _, idx) in data.dyads() {
            let x = data.x(idx);
            for c in 0..t {
                xi[idx][c] = quad_form(&second, c, t, x).max(0.0).sqrt();
            }
        }

        // per-dyad bound value at each block pair
        let bound = |idx: usize, c: usize| -> f64 {
            let x = data.x(idx);
            let shift = data.y(idx) as f64 - 0.5;
            let mut a = m[c];
            for (d1, &xd) in x.iter().enumerate() {
                a += m[t + d1] * xd;
            }
            let xv = xi[idx][c];
            let lam = lambda(xv);
            shift * a - lam * quad_form(&second, c, t, x) + log_sigmoid(xv) - 0.5 * xv
                + lam * xv * xv
        };

        // membership updates, one node at a time against the others
        let dig_total = digamma(delta.iter().sum());
        let e_ln_pi: Vec<f64> = delta.iter().map(|&dk| digamma(dk) - dig_total).collect();
        for i in 0..n {
            let mut scores = vec![0.0; g];
            for (k, s) in scores.iter_mut().enumerate() {
                *s = e_ln_pi[k];
            }
            for j in 0..n {
                if j == i {
                    continue;
                }
                let idx = data.dyad_index(i, j);
                for k in 0..g {
                    for l in 0..g {
                        if tau[j][l] > 0.0 {
                            scores[k] += tau[j][l] * bound(idx, tri_index(g, k, l));
                        }
                    }
                }
            }
            let lse = logsumexp(&scores);
            for k in 0..g {
                tau[i][k] = (scores[k] - lse).exp();
            }
        }

        for (k, dk) in delta.iter_mut().enumerate() {
            *dk = hyper.d + tau.iter().map(|row| row[k]).sum::<f64>();
        }

        let mut elbo = 0.0;
        for (i, j, idx) in data.dyads() {
            let w = pair_weights(&tau, i, j);
            for (c, &wc) in w.iter().enumerate() {
                if wc > 0.0 {
                    elbo += wc * bound(idx, c);
                }
            }
        }
        let dig_total = digamma(delta.iter().sum());
        for row in &tau {
            for (k, &v) in row.iter().enumerate() {
                if v > 0.0 {
                    elbo += v * (digamma(delta[k]) - dig_total - v.ln());
                }
            }
        }
        elbo -= super::lca_vb::kl_dirichlet(&delta, &vec![hyper.d; g]);
        // KL of the joint Gaussian against its diagonal prior
        let mut kl_gauss = -0.5 * (r as f64) - 0.5 * (-log_det_prec);
        for (c, &v) in prior_vars.iter().enumerate() {
            kl_gauss += 0.5 * ((cov[(c, c)] + m[c] * m[c]) / v + v.ln());
        }
        elbo -= kl_gauss;

        elbos.push(elbo);
        if (elbo - elbo_prev).abs() < ELBO_TOL {
            result = Some((m, cov));
            break;
        }
        if iter == MAX_ITERS {
            return Err(SbsError::NoConvergence {
                iters: iter,
                delta: elbo - elbo_prev,
            });
        }
        elbo_prev = elbo;
    }

    let (m, cov) = result.expect("loop either converges or errors out");
    let alpha_gauss = GaussianApprox::new(
        DVector::from_fn(t, |c, _| m[c]),
        DMatrix::from_fn(t, t, |c1, c2| cov[(c1, c2)]),
    )?;
    let beta_gauss = GaussianApprox::new(
        DVector::from_fn(p, |d1, _| m[t + d1]),
        DMatrix::from_fn(p, p, |d1, d2| cov[(t + d1, t + d2)]),
    )?;
    let elbo = *elbos.last().expect("at least one iteration");
    Ok((
        SbmRegVbApprox {
            assign_probs: tau,
            alpha_gauss,
            beta_gauss,
            pi_dirichlet: delta,
            elbo,
        },
        elbos,
    ))
}

/// Position of the unordered pair (k, l), k <= l, in the vectorized
/// upper triangle.
pub(crate) fn tri_index(g: usize, k: usize, l: usize) -> usize {
    let (k, l) = if k <= l { (k, l) } else { (l, k) };
    k * g - k * (k + 1) / 2 + l
}

/// phi' M phi for phi = e_c ++ x (indicator on the alpha coordinate,
/// then the covariates).
fn quad_form(second: &DMatrix<f64>, c: usize, t: usize, x: &[f64]) -> f64 {
    let mut q = second[(c, c)];
    for (d1, &xd) in x.iter().enumerate() {
        q += 2.0 * xd * second[(c, t + d1)];
        for (d2, &xe) in x.iter().enumerate() {
            q += xd * xe * second[(t + d1, t + d2)];
        }
    }
    q
}

/// Hard spectral clustering of the adjacency matrix, softened into
/// membership probabilities.
fn spectral_init(data: &EdgeData, g: usize) -> Vec<Vec<f64>> {
    let n = data.n();
    if g == 1 {
        return vec![vec![1.0]; n];
    }
    let eig = data.adjacency().symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .abs()
            .total_cmp(&eig.eigenvalues[a].abs())
    });
    let dims = g.min(n);
    let embed: Vec<Vec<f64>> = (0..n)
        .map(|i| order[..dims].iter().map(|&e| eig.eigenvectors[(i, e)]).collect())
        .collect();
    let labels = kmeans(&embed, g);
    let soft = 0.15 / (g - 1) as f64;
    (0..n)
        .map(|i| {
            (0..g)
                .map(|k| if labels[i] == k { 0.85 } else { soft })
                .collect()
        })
        .collect()
}

/// Plain Lloyd iterations with farthest-first seeding; deterministic.
fn kmeans(points: &[Vec<f64>], g: usize) -> Vec<usize> {
    let n = points.len();
    let dim = points[0].len();
    let dist2 = |a: &[f64], b: &[f64]| -> f64 {
        a.iter().zip(b).map(|(&u, &v)| (u - v) * (u - v)).sum()
    };

    let first = (0..n)
        .max_by(|&a, &b| {
            let na: f64 = points[a].iter().map(|v| v * v).sum();
            let nb: f64 = points[b].iter().map(|v| v * v).sum();
            na.total_cmp(&nb)
        })
        .unwrap();
    let mut centers = vec![points[first].clone()];
    while centers.len() < g {
        let far = (0..n)
            .max_by(|&a, &b| {
                let da = centers
                    .iter()
                    .map(|c| dist2(&points[a], c))
                    .fold(f64::INFINITY, f64::min);
                let db = centers
                    .iter()
                    .map(|c| dist2(&points[b], c))
                    .fold(f64::INFINITY, f64::min);
                da.total_cmp(&db)
            })
            .unwrap();
        centers.push(points[far].clone());
    }

    let mut labels = vec![0usize; n];
    for _ in 0..50 {
        let mut changed = false;
        for (i, pt) in points.iter().enumerate() {
            let best = (0..g)
                .min_by(|&a, &b| dist2(pt, &centers[a]).total_cmp(&dist2(pt, &centers[b])))
                .unwrap();
            if labels[i] != best {
                labels[i] = best;
                changed = true;
            }
        }
        for (k, center) in centers.iter_mut().enumerate() {
            let members: Vec<&Vec<f64>> =
                points.iter().zip(&labels).filter(|(_, &l)| l == k).map(|(p, _)| p).collect();
            if members.is_empty() {
                continue;
            }
            for d in 0..dim {
                center[d] = members.iter().map(|p| p[d]).sum::<f64>() / members.len() as f64;
            }
        }
        if !changed {
            break;
        }
    }
    labels
}
