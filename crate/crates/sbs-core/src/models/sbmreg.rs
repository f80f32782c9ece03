//! Stochastic block model with dyad-level logistic covariate effects.
//!
//! Each of n nodes carries a latent group label; an undirected edge
//! between nodes i and j appears with probability
//! sigmoid(alpha_{z_i z_j} + x_ij' beta), where alpha is a symmetric
//! matrix of between-group effects and beta weights observed dyad
//! covariates. Priors: Gaussian on alpha and beta entries, Dirichlet on
//! the group proportions.
//!
//! The move kernel mixes Gibbs updates for the labels and proportions
//! (both stay in conjugate families along the tempered path) with
//! random-walk Metropolis blocks for alpha and beta, scaled by the
//! start distribution's covariances.

use crate::approx::SbmRegVbApprox;
use crate::engine::BridgeTarget;
use crate::error::{Result, SbsError};
use crate::math::{dirichlet_ln_pdf, log1pexp, logsumexp, normal_ln_pdf, sigmoid};
use crate::rng::SubRng;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

/// Scale mixture for the random-walk proposals on alpha and beta.
const PROPOSAL_SCALES: [f64; 3] = [1.0, 0.1, 10.0];

/// Undirected binary network with covariates on every unordered dyad,
/// stored triangularly: dyad (i, j) with i < j sits at index
/// i·n − i(i+1)/2 + (j − i − 1).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EdgeData {
    n: usize,
    p: usize,
    y: Vec<u8>,
    x: Vec<Vec<f64>>,
}

impl EdgeData {
    pub fn new(n: usize, y: Vec<u8>, x: Vec<Vec<f64>>) -> Result<Self> {
        if n < 2 {
            return Err(SbsError::InvalidData(
                "a network needs at least two nodes".into(),
            ));
        }
        let expect = n * (n - 1) / 2;
        if y.len() != expect || x.len() != expect {
            return Err(SbsError::InvalidData(format!(
                "expected {expect} dyads for {n} nodes, got {} responses and {} covariate rows",
                y.len(),
                x.len()
            )));
        }
        if let Some(&v) = y.iter().find(|&&v| v > 1) {
            return Err(SbsError::InvalidData(format!(
                "adjacency holds non-binary value {v}"
            )));
        }
        let p = x[0].len();
        if x.iter().any(|row| row.len() != p) {
            return Err(SbsError::InvalidData(
                "covariate rows have inconsistent lengths".into(),
            ));
        }
        Ok(EdgeData { n, p, y, x })
    }

    /// Builds from an explicit dyad list; every unordered pair must
    /// appear exactly once.
    pub fn from_dyad_list(n: usize, entries: Vec<(usize, usize, u8, Vec<f64>)>) -> Result<Self> {
        if n < 2 {
            return Err(SbsError::InvalidData(
                "a network needs at least two nodes".into(),
            ));
        }
        let expect = n * (n - 1) / 2;
        let mut y = vec![None; expect];
        let mut x = vec![None; expect];
        for (i, j, yv, xv) in entries {
            if i == j || i >= n || j >= n {
                return Err(SbsError::InvalidData(format!(
                    "dyad ({i}, {j}) invalid for {n} nodes"
                )));
            }
            let (a, b) = if i < j { (i, j) } else { (j, i) };
            let idx = a * n - a * (a + 1) / 2 + (b - a - 1);
            if y[idx].is_some() {
                return Err(SbsError::InvalidData(format!(
                    "dyad ({a}, {b}) listed more than once"
                )));
            }
            y[idx] = Some(yv);
            x[idx] = Some(xv);
        }
        if y.iter().any(Option::is_none) {
            return Err(SbsError::InvalidData(format!(
                "dyad list incomplete: expected all {expect} unordered pairs"
            )));
        }
        EdgeData::new(
            n,
            y.into_iter().map(Option::unwrap).collect(),
            x.into_iter().map(Option::unwrap).collect(),
        )
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn dyad_count(&self) -> usize {
        self.y.len()
    }

    pub fn dyad_index(&self, i: usize, j: usize) -> usize {
        let (a, b) = if i < j { (i, j) } else { (j, i) };
        a * self.n - a * (a + 1) / 2 + (b - a - 1)
    }

    pub fn y(&self, idx: usize) -> u8 {
        self.y[idx]
    }

    pub fn x(&self, idx: usize) -> &[f64] {
        &self.x[idx]
    }

    /// Iterates (i, j, dyad index) over all unordered pairs, i < j.
    pub fn dyads(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        (0..self.n).flat_map(move |i| {
            ((i + 1)..self.n).map(move |j| (i, j, self.dyad_index(i, j)))
        })
    }

    pub fn adjacency(&self) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(self.n, self.n);
        for (i, j, idx) in self.dyads() {
            a[(i, j)] = self.y[idx] as f64;
            a[(j, i)] = self.y[idx] as f64;
        }
        a
    }
}

/// Prior hyperparameters: variances of the Gaussian priors on alpha and
/// beta, and the Dirichlet weight on the proportions.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SbmRegHyper {
    pub alpha_var: f64,
    pub beta_var: f64,
    pub d: f64,
}

impl Default for SbmRegHyper {
    fn default() -> Self {
        SbmRegHyper {
            alpha_var: 1.0,
            beta_var: 1.0,
            d: 1.0,
        }
    }
}

impl SbmRegHyper {
    pub fn validate(&self) -> Result<()> {
        if self.alpha_var > 0.0 && self.beta_var > 0.0 && self.d > 0.0 {
            Ok(())
        } else {
            Err(SbsError::InvalidConfig(
                "block-model hyperparameters must be strictly positive".into(),
            ))
        }
    }
}

/// Full latent state of the block model.
#[derive(Debug, Clone)]
pub struct SbmRegState {
    pub z: Vec<usize>,
    /// Symmetric g by g matrix of between-group effects.
    pub alpha: DMatrix<f64>,
    pub beta: DVector<f64>,
    pub pi: Vec<f64>,
}

impl SbmRegState {
    /// Applies a group relabeling: old group k becomes `perm[k]`.
    pub fn relabel(&self, perm: &[usize]) -> SbmRegState {
        let g = self.pi.len();
        let mut alpha = DMatrix::zeros(g, g);
        let mut pi = vec![0.0; g];
        for k in 0..g {
            pi[perm[k]] = self.pi[k];
            for l in 0..g {
                alpha[(perm[k], perm[l])] = self.alpha[(k, l)];
            }
        }
        SbmRegState {
            z: self.z.iter().map(|&zi| perm[zi]).collect(),
            alpha,
            beta: self.beta.clone(),
            pi,
        }
    }
}

/// Upper triangle of a symmetric matrix as a vector, row-major.
pub fn alpha_to_vec(alpha: &DMatrix<f64>) -> DVector<f64> {
    let g = alpha.nrows();
    let mut v = DVector::zeros(g * (g + 1) / 2);
    let mut idx = 0;
    for k in 0..g {
        for l in k..g {
            v[idx] = alpha[(k, l)];
            idx += 1;
        }
    }
    v
}

/// Symmetric matrix from its vectorized upper triangle.
pub fn vec_to_alpha(g: usize, v: &DVector<f64>) -> DMatrix<f64> {
    let mut alpha = DMatrix::zeros(g, g);
    let mut idx = 0;
    for k in 0..g {
        for l in k..g {
            alpha[(k, l)] = v[idx];
            alpha[(l, k)] = v[idx];
            idx += 1;
        }
    }
    alpha
}

/// Log likelihood of the network given the full state.
pub fn log_lik_sbmreg(state: &SbmRegState, data: &EdgeData) -> f64 {
    let mut ll = 0.0;
    for (i, j, idx) in data.dyads() {
        let mut eta = state.alpha[(state.z[i], state.z[j])];
        for (d, &xd) in data.x(idx).iter().enumerate() {
            eta += state.beta[d] * xd;
        }
        ll += data.y(idx) as f64 * eta - log1pexp(eta);
    }
    ll
}

/// Log prior density of (Z, alpha, beta, pi).
pub fn log_prior_sbmreg(state: &SbmRegState, hyper: &SbmRegHyper) -> f64 {
    let g = state.pi.len();
    let mut lp: f64 = state.z.iter().map(|&zi| state.pi[zi].ln()).sum();
    for k in 0..g {
        for l in k..g {
            lp += normal_ln_pdf(state.alpha[(k, l)], 0.0, hyper.alpha_var);
        }
    }
    for &b in state.beta.iter() {
        lp += normal_ln_pdf(b, 0.0, hyper.beta_var);
    }
    lp + dirichlet_ln_pdf(&state.pi, &vec![hyper.d; g])
}

/// Joint log density of network and latent state.
pub fn log_joint_sbmreg(state: &SbmRegState, data: &EdgeData, hyper: &SbmRegHyper) -> f64 {
    log_lik_sbmreg(state, data) + log_prior_sbmreg(state, hyper)
}

/// Draws parameters from the prior and a network from the model, with
/// standard normal dyad covariates.
pub fn simulate_sbmreg_prior(
    n: usize,
    p: usize,
    g: usize,
    hyper: &SbmRegHyper,
    rng: &mut SubRng,
) -> (SbmRegState, EdgeData) {
    let pi = crate::approx::lca_vb::sample_dirichlet(&vec![hyper.d; g], rng);
    let mut alpha = DMatrix::zeros(g, g);
    for k in 0..g {
        for l in k..g {
            let v: f64 = rng.sample::<f64, _>(StandardNormal) * hyper.alpha_var.sqrt();
            alpha[(k, l)] = v;
            alpha[(l, k)] = v;
        }
    }
    let beta = DVector::from_fn(p, |_, _| {
        rng.sample::<f64, _>(StandardNormal) * hyper.beta_var.sqrt()
    });
    let z: Vec<usize> = (0..n)
        .map(|_| {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            for (k, &pk) in pi.iter().enumerate() {
                acc += pk;
                if u < acc {
                    return k;
                }
            }
            g - 1
        })
        .collect();

    let n_dyads = n * (n - 1) / 2;
    let mut x = Vec::with_capacity(n_dyads);
    let mut y = Vec::with_capacity(n_dyads);
    for i in 0..n {
        for j in (i + 1)..n {
            let xd: Vec<f64> = (0..p).map(|_| rng.sample(StandardNormal)).collect();
            let mut eta = alpha[(z[i], z[j])];
            for (d, &xv) in xd.iter().enumerate() {
                eta += beta[d] * xv;
            }
            y.push(u8::from(rng.random::<f64>() < sigmoid(eta)));
            x.push(xd);
        }
    }
    let state = SbmRegState {
        z,
        alpha,
        beta,
        pi,
    };
    (state, EdgeData { n, p, y, x })
}

/// Start distribution of the block-model bridge.
pub enum SbmRegStart {
    Vb(SbmRegVbApprox),
    Prior,
}

/// Bridge target for the covariate block model.
pub struct SbmRegTarget {
    data: EdgeData,
    hyper: SbmRegHyper,
    g: usize,
    start: SbmRegStart,
    chol_alpha: DMatrix<f64>,
    chol_beta: DMatrix<f64>,
}

impl SbmRegTarget {
    pub fn new(data: EdgeData, hyper: SbmRegHyper, g: usize, start: SbmRegStart) -> Result<Self> {
        hyper.validate()?;
        if g == 0 || g > data.n() {
            return Err(SbsError::InvalidConfig(format!(
                "group count {g} must lie in 1..={}",
                data.n()
            )));
        }
        let t = g * (g + 1) / 2;
        let (chol_alpha, chol_beta) = match &start {
            SbmRegStart::Vb(q) => {
                if q.g() != g || q.n() != data.n() || q.p() != data.p() {
                    return Err(SbsError::InvalidConfig(format!(
                        "approximation shape (n={}, p={}, g={}) does not match target \
                         (n={}, p={}, g={g})",
                        q.n(),
                        q.p(),
                        q.g(),
                        data.n(),
                        data.p()
                    )));
                }
                (
                    q.alpha_gauss.chol_lower().clone(),
                    q.beta_gauss.chol_lower().clone(),
                )
            }
            SbmRegStart::Prior => (
                DMatrix::identity(t, t) * hyper.alpha_var.sqrt(),
                DMatrix::identity(data.p(), data.p()) * hyper.beta_var.sqrt(),
            ),
        };
        Ok(SbmRegTarget {
            data,
            hyper,
            g,
            start,
            chol_alpha,
            chol_beta,
        })
    }

    pub fn data(&self) -> &EdgeData {
        &self.data
    }

    pub fn groups(&self) -> usize {
        self.g
    }

    fn start_assign_logweight(&self, i: usize, k: usize, state: &SbmRegState) -> f64 {
        match &self.start {
            SbmRegStart::Vb(q) => q.assign_probs[i][k].ln(),
            SbmRegStart::Prior => state.pi[k].ln(),
        }
    }

    fn start_dirichlet_param(&self, k: usize) -> f64 {
        match &self.start {
            SbmRegStart::Vb(q) => q.pi_dirichlet[k],
            SbmRegStart::Prior => self.hyper.d,
        }
    }

    /// The tempered log density terms that involve alpha or beta; the
    /// assignment and proportion terms cancel in the Metropolis ratio.
    fn continuous_part(&self, state: &SbmRegState, rho: f64) -> f64 {
        let start_part = match &self.start {
            SbmRegStart::Vb(q) => {
                q.alpha_gauss.log_density(&alpha_to_vec(&state.alpha))
                    + q.beta_gauss.log_density(&state.beta)
            }
            SbmRegStart::Prior => self.gauss_prior_part(state),
        };
        (1.0 - rho) * start_part
            + rho * (log_lik_sbmreg(state, &self.data) + self.gauss_prior_part(state))
    }

    fn gauss_prior_part(&self, state: &SbmRegState) -> f64 {
        let mut lp = 0.0;
        for k in 0..self.g {
            for l in k..self.g {
                lp += normal_ln_pdf(state.alpha[(k, l)], 0.0, self.hyper.alpha_var);
            }
        }
        for &b in state.beta.iter() {
            lp += normal_ln_pdf(b, 0.0, self.hyper.beta_var);
        }
        lp
    }

    /// Random-walk proposal from a scale-mixture of Gaussians shaped by
    /// `chol`; symmetric, so no proposal correction is needed.
    fn propose(base: &DVector<f64>, chol: &DMatrix<f64>, rng: &mut SubRng) -> DVector<f64> {
        let scale = PROPOSAL_SCALES[rng.random_range(0..PROPOSAL_SCALES.len())].sqrt();
        let eps = DVector::from_fn(base.nrows(), |_, _| rng.sample(StandardNormal));
        base + scale * chol * eps
    }
}

impl BridgeTarget for SbmRegTarget {
    type State = SbmRegState;

    fn log_prior(&self, state: &SbmRegState) -> f64 {
        log_prior_sbmreg(state, &self.hyper)
    }

    fn log_lik(&self, state: &SbmRegState) -> f64 {
        log_lik_sbmreg(state, &self.data)
    }

    fn log_approx(&self, state: &SbmRegState) -> f64 {
        match &self.start {
            SbmRegStart::Vb(q) => q.log_density(state),
            SbmRegStart::Prior => log_prior_sbmreg(state, &self.hyper),
        }
    }

    fn sample_approx(&self, rng: &mut SubRng) -> SbmRegState {
        match &self.start {
            SbmRegStart::Vb(q) => q.sample(rng),
            SbmRegStart::Prior => {
                let pi =
                    crate::approx::lca_vb::sample_dirichlet(&vec![self.hyper.d; self.g], rng);
                let mut alpha = DMatrix::zeros(self.g, self.g);
                for k in 0..self.g {
                    for l in k..self.g {
                        let v: f64 =
                            rng.sample::<f64, _>(StandardNormal) * self.hyper.alpha_var.sqrt();
                        alpha[(k, l)] = v;
                        alpha[(l, k)] = v;
                    }
                }
                let beta = DVector::from_fn(self.data.p(), |_, _| {
                    rng.sample::<f64, _>(StandardNormal) * self.hyper.beta_var.sqrt()
                });
                let z = (0..self.data.n())
                    .map(|_| {
                        let u: f64 = rng.random();
                        let mut acc = 0.0;
                        for (k, &pk) in pi.iter().enumerate() {
                            acc += pk;
                            if u < acc {
                                return k;
                            }
                        }
                        self.g - 1
                    })
                    .collect();
                SbmRegState {
                    z,
                    alpha,
                    beta,
                    pi,
                }
            }
        }
    }

    /// Hybrid sweep: Gibbs on the labels and proportions, Metropolis on
    /// the continuous blocks.
    fn move_kernel(&self, state: &mut SbmRegState, rho: f64, rng: &mut SubRng) {
        let n = self.data.n();

        // cached covariate contributions to each dyad's linear predictor
        let xb: Vec<f64> = (0..self.data.dyad_count())
            .map(|idx| {
                self.data
                    .x(idx)
                    .iter()
                    .enumerate()
                    .map(|(d, &xd)| state.beta[d] * xd)
                    .sum()
            })
            .collect();

        for i in 0..n {
            let log_weights: Vec<f64> = (0..self.g)
                .map(|k| {
                    let mut w = (1.0 - rho) * self.start_assign_logweight(i, k, state)
                        + rho * state.pi[k].ln();
                    for j in 0..n {
                        if j == i {
                            continue;
                        }
                        let idx = self.data.dyad_index(i, j);
                        let eta = state.alpha[(k, state.z[j])] + xb[idx];
                        w += rho * (self.data.y(idx) as f64 * eta - log1pexp(eta));
                    }
                    w
                })
                .collect();
            let lse = logsumexp(&log_weights);
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut pick = self.g - 1;
            for (k, &lw) in log_weights.iter().enumerate() {
                acc += (lw - lse).exp();
                if u < acc {
                    pick = k;
                    break;
                }
            }
            state.z[i] = pick;
        }

        let mut counts = vec![0.0; self.g];
        for &zi in &state.z {
            counts[zi] += 1.0;
        }
        let d: Vec<f64> = (0..self.g)
            .map(|k| {
                (1.0 - rho) * self.start_dirichlet_param(k) + rho * (self.hyper.d + counts[k])
            })
            .collect();
        state.pi = crate::approx::lca_vb::sample_dirichlet(&d, rng);

        // Metropolis block for alpha
        let current = self.continuous_part(state, rho);
        let prop_vec = Self::propose(&alpha_to_vec(&state.alpha), &self.chol_alpha, rng);
        let mut proposal = state.clone();
        proposal.alpha = vec_to_alpha(self.g, &prop_vec);
        let cand = self.continuous_part(&proposal, rho);
        if (rng.random::<f64>()).ln() < cand - current {
            state.alpha = proposal.alpha;
        }

        // Metropolis block for beta
        let current = self.continuous_part(state, rho);
        let prop_beta = Self::propose(&state.beta, &self.chol_beta, rng);
        let mut proposal = state.clone();
        proposal.beta = prop_beta;
        let cand = self.continuous_part(&proposal, rho);
        if (rng.random::<f64>()).ln() < cand - current {
            state.beta = proposal.beta;
        }
    }

    fn param_names(&self) -> Vec<String> {
        let mut names: Vec<String> = (1..=self.g).map(|k| format!("pi_{k}")).collect();
        for k in 1..=self.g {
            for l in k..=self.g {
                names.push(format!("alpha_{k}_{l}"));
            }
        }
        names.extend((1..=self.data.p()).map(|d| format!("beta_{d}")));
        names
    }

    fn flatten(&self, state: &SbmRegState) -> Vec<f64> {
        let mut out = state.pi.clone();
        out.extend(alpha_to_vec(&state.alpha).iter());
        out.extend(state.beta.iter());
        out
    }
}
