//! Mean-field variational approximation for latent class analysis, and
//! its label-symmetrized version.
//!
//! The factorization is q(Z) q(pi) q(gamma) with categorical rows tau_i,
//! Dirichlet(delta~) on the class proportions and Beta(alpha~, beta~) on
//! the item probabilities. Coordinate ascent alternates the closed-form
//! conjugate updates; the ELBO is monotone by construction.
//!
//! A fitted mean-field approximation concentrates on one labeling of the
//! classes. The symmetrized version averages the density over all g!
//! label permutations, which restores the exchangeability the true
//! posterior has.

use crate::error::{Result, SbsError};
use crate::math::{beta_ln_pdf, dirichlet_ln_pdf, logsumexp};
use crate::models::lca::{LcaData, LcaHyper, LcaState};
use crate::rng::SubRng;
use itertools::Itertools;
use rand::Rng;
use rand_distr::{Beta as BetaDist, Distribution, Gamma};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::{digamma, ln_gamma};

const ELBO_TOL: f64 = 1e-6;
const MAX_ITERS: usize = 500;
pub const DEFAULT_RESTARTS: usize = 5;

/// Mean-field variational posterior for latent class analysis.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LcaVbApprox {
    /// Dirichlet parameters of q(pi), length g.
    pub dirichlet_params: Vec<f64>,
    /// Beta shape-1 parameters of q(gamma), g rows of q entries.
    pub alpha_params: Vec<Vec<f64>>,
    /// Beta shape-2 parameters of q(gamma), g rows of q entries.
    pub beta_params: Vec<Vec<f64>>,
    /// Assignment probabilities tau, n rows of g entries summing to 1.
    pub assign_probs: Vec<Vec<f64>>,
    /// Final value of the evidence lower bound.
    pub elbo: f64,
}

impl LcaVbApprox {
    pub fn g(&self) -> usize {
        self.dirichlet_params.len()
    }

    pub fn q(&self) -> usize {
        self.alpha_params.first().map_or(0, Vec::len)
    }

    pub fn n(&self) -> usize {
        self.assign_probs.len()
    }

    pub fn validate(&self) -> Result<()> {
        let ok_pos = self.dirichlet_params.iter().all(|&v| v > 0.0)
            && self
                .alpha_params
                .iter()
                .chain(&self.beta_params)
                .flatten()
                .all(|&v| v > 0.0);
        if !ok_pos {
            return Err(SbsError::InvalidData(
                "variational parameters must be strictly positive".into(),
            ));
        }
        for row in &self.assign_probs {
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > 1e-12 {
                return Err(SbsError::InvalidData(format!(
                    "assignment row sums to {s}, expected 1"
                )));
            }
        }
        Ok(())
    }

    /// Log density of the factorized approximation at a state (the
    /// state's permutation component is ignored; see
    /// [`SymmetrizedApprox`] for the label-averaged version).
    pub fn log_density(&self, state: &LcaState) -> f64 {
        self.log_density_permuted(state, None)
    }

    /// Log density with variational factors relabeled by `sigma`:
    /// class k reads the parameters of class sigma(k).
    pub fn log_density_permuted(&self, state: &LcaState, sigma: Option<&[usize]>) -> f64 {
        let g = self.g();
        let look = |k: usize| sigma.map_or(k, |s| s[k]);
        let mut lp = 0.0;
        for (i, &zi) in state.z.iter().enumerate() {
            lp += self.assign_probs[i][look(zi)].ln();
        }
        for k in 0..g {
            let kk = look(k);
            for j in 0..self.q() {
                lp += beta_ln_pdf(
                    state.gamma[k][j],
                    self.alpha_params[kk][j],
                    self.beta_params[kk][j],
                );
            }
        }
        let permuted_delta: Vec<f64> = (0..g).map(|k| self.dirichlet_params[look(k)]).collect();
        lp + dirichlet_ln_pdf(&state.pi, &permuted_delta)
    }

    /// Draws a state from the approximation (identity permutation),
    /// optionally with class parameters relabeled by `sigma`.
    pub fn sample_permuted(&self, sigma: Option<&[usize]>, rng: &mut SubRng) -> LcaState {
        let g = self.g();
        let q = self.q();
        let look = |k: usize| sigma.map_or(k, |s| s[k]);
        let z = self
            .assign_probs
            .iter()
            .map(|row| {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for k in 0..g {
                    acc += row[look(k)];
                    if u < acc {
                        return k;
                    }
                }
                g - 1
            })
            .collect();
        let gamma = (0..g)
            .map(|k| {
                let kk = look(k);
                (0..q)
                    .map(|j| {
                        BetaDist::new(self.alpha_params[kk][j], self.beta_params[kk][j])
                            .expect("positive Beta parameters")
                            .sample(rng)
                    })
                    .collect()
            })
            .collect();
        let delta: Vec<f64> = (0..g).map(|k| self.dirichlet_params[look(k)]).collect();
        let pi = sample_dirichlet(&delta, rng);
        LcaState {
            z,
            gamma,
            pi,
            sigma: (0..g).collect(),
        }
    }

    pub fn sample(&self, rng: &mut SubRng) -> LcaState {
        self.sample_permuted(None, rng)
    }
}

/// Dirichlet draw by normalized Gamma variables.
pub(crate) fn sample_dirichlet(alpha: &[f64], rng: &mut SubRng) -> Vec<f64> {
    let mut draws: Vec<f64> = alpha
        .iter()
        .map(|&a| Gamma::new(a, 1.0).expect("positive shape").sample(rng))
        .collect();
    let total: f64 = draws.iter().sum();
    if total <= 0.0 {
        // all-zero underflow for very small shapes; fall back to uniform
        return vec![1.0 / alpha.len() as f64; alpha.len()];
    }
    for d in &mut draws {
        *d /= total;
    }
    draws
}

/// Fits the mean-field approximation by coordinate ascent with random
/// restarts, keeping the fit with the best ELBO.
pub fn fit_vb_lca(data: &LcaData, g: usize, hyper: &LcaHyper, seed: u64) -> Result<LcaVbApprox> {
    fit_vb_lca_restarts(data, g, hyper, seed, DEFAULT_RESTARTS)
}

pub fn fit_vb_lca_restarts(
    data: &LcaData,
    g: usize,
    hyper: &LcaHyper,
    seed: u64,
    restarts: usize,
) -> Result<LcaVbApprox> {
    if g == 0 {
        return Err(SbsError::InvalidConfig("g must be at least 1".into()));
    }
    hyper.validate()?;
    let mut best: Option<LcaVbApprox> = None;
    for r in 0..restarts.max(1) {
        let mut rng = crate::rng::substream(seed, u64::MAX - 2, r as u64);
        let fit = cavi(data, g, hyper, &mut rng).0;
        if best.as_ref().is_none_or(|b| fit.elbo > b.elbo) {
            best = Some(fit);
        }
    }
    Ok(best.expect("at least one restart"))
}

/// One coordinate-ascent run from a random soft assignment; returns the
/// fit and the ELBO trace.
fn cavi(data: &LcaData, g: usize, hyper: &LcaHyper, rng: &mut SubRng) -> (LcaVbApprox, Vec<f64>) {
    let n = data.n();
    let q = data.q;
    let mut tau: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            let raw: Vec<f64> = (0..g).map(|_| 0.1 + rng.random::<f64>()).collect();
            let s: f64 = raw.iter().sum();
            raw.into_iter().map(|v| v / s).collect()
        })
        .collect();

    let mut delta = vec![0.0; g];
    let mut alpha = vec![vec![0.0; q]; g];
    let mut beta = vec![vec![0.0; q]; g];
    let mut elbos = Vec::new();
    let mut elbo_prev = f64::NEG_INFINITY;
    let mut elbo = f64::NEG_INFINITY;

    for _ in 0..MAX_ITERS {
        // conjugate parameter updates from the current assignments
        for k in 0..g {
            let nk: f64 = (0..n).map(|i| tau[i][k]).sum();
            delta[k] = hyper.d + nk;
            for j in 0..q {
                let skj: f64 = (0..n)
                    .map(|i| tau[i][k] * data.y[i][j] as f64)
                    .sum();
                alpha[k][j] = hyper.a + skj;
                beta[k][j] = hyper.b + nk - skj;
            }
        }

        // expected log parameters
        let dig_total = digamma(delta.iter().sum());
        let e_ln_pi: Vec<f64> = delta.iter().map(|&dk| digamma(dk) - dig_total).collect();
        let mut e_ln_g = vec![vec![0.0; q]; g];
        let mut e_ln_1mg = vec![vec![0.0; q]; g];
        for k in 0..g {
            for j in 0..q {
                let tot = digamma(alpha[k][j] + beta[k][j]);
                e_ln_g[k][j] = digamma(alpha[k][j]) - tot;
                e_ln_1mg[k][j] = digamma(beta[k][j]) - tot;
            }
        }

        // assignment update and the entropy-collapsed ELBO term
        let mut assign_term = 0.0;
        for i in 0..n {
            let scores: Vec<f64> = (0..g)
                .map(|k| {
                    let mut s = e_ln_pi[k];
                    for j in 0..q {
                        s += if data.y[i][j] == 1 {
                            e_ln_g[k][j]
                        } else {
                            e_ln_1mg[k][j]
                        };
                    }
                    s
                })
                .collect();
            let lse = logsumexp(&scores);
            assign_term += lse;
            for k in 0..g {
                tau[i][k] = (scores[k] - lse).exp();
            }
        }

        elbo = assign_term
            - kl_dirichlet(&delta, &vec![hyper.d; g])
            - (0..g)
                .map(|k| {
                    (0..q)
                        .map(|j| {
                            kl_dirichlet(
                                &[alpha[k][j], beta[k][j]],
                                &[hyper.a, hyper.b],
                            )
                        })
                        .sum::<f64>()
                })
                .sum::<f64>();
        elbos.push(elbo);
        if (elbo - elbo_prev).abs() < ELBO_TOL {
            break;
        }
        elbo_prev = elbo;
    }

    (
        LcaVbApprox {
            dirichlet_params: delta,
            alpha_params: alpha,
            beta_params: beta,
            assign_probs: tau,
            elbo,
        },
        elbos,
    )
}

/// KL divergence between Dirichlet distributions (Beta is the 2-cell
/// case).
pub(crate) fn kl_dirichlet(from: &[f64], to: &[f64]) -> f64 {
    let s_from: f64 = from.iter().sum();
    let dig_s = digamma(s_from);
    let mut kl = ln_gamma(s_from) - ln_gamma(to.iter().sum());
    for (&f, &t) in from.iter().zip(to) {
        kl += ln_gamma(t) - ln_gamma(f) + (f - t) * (digamma(f) - dig_s);
    }
    kl
}

/// Label-symmetrized approximation: the uniform mixture of the base
/// density over all g! relabelings of the classes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SymmetrizedApprox {
    pub base: LcaVbApprox,
    perms: Vec<Vec<usize>>,
}

/// Builds the symmetrized version of a fitted approximation. Refuses
/// g > 6, where enumerating g! permutations stops being reasonable.
pub fn symmetrize(base: LcaVbApprox) -> Result<SymmetrizedApprox> {
    let g = base.g();
    if g > 6 {
        return Err(SbsError::TooManyGroups(g));
    }
    let perms = (0..g).permutations(g).collect();
    Ok(SymmetrizedApprox { base, perms })
}

impl SymmetrizedApprox {
    pub fn g(&self) -> usize {
        self.base.g()
    }

    pub fn permutations(&self) -> &[Vec<usize>] {
        &self.perms
    }

    /// Marginal log density: log of the permutation-averaged mixture.
    pub fn log_density(&self, state: &LcaState) -> f64 {
        let terms: Vec<f64> = self
            .perms
            .iter()
            .map(|p| self.base.log_density_permuted(state, Some(p)))
            .collect();
        logsumexp(&terms) - (self.perms.len() as f64).ln()
    }

    /// Log density of one mixture component (no 1/g! factor).
    pub fn log_component_density(&self, state: &LcaState, sigma: &[usize]) -> f64 {
        self.base.log_density_permuted(state, Some(sigma))
    }

    /// Draws a permutation uniformly, then a state from that component;
    /// the drawn permutation is stored in the state.
    pub fn sample(&self, rng: &mut SubRng) -> LcaState {
        let idx = rng.random_range(0..self.perms.len());
        let sigma = self.perms[idx].clone();
        let mut state = self.base.sample_permuted(Some(&sigma), rng);
        state.sigma = sigma;
        state
    }
}
