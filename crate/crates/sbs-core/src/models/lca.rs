//! Latent class analysis with binary items.
//!
//! Each of n subjects belongs to one of g latent classes; class k
//! answers item j positively with probability gamma_kj. Priors are
//! Dirichlet(d) on the class proportions and iid Beta(a, b) on the item
//! probabilities.
//!
//! The bridge target carries an extended state (Z, gamma, pi, sigma)
//! where sigma is a class relabeling with uniform prior 1/g!. When the
//! start distribution is the symmetrized approximation, sigma indexes
//! its mixture component and the 1/g! factors cancel from the weights,
//! so the evidence estimate is exactly the marginal likelihood. For the
//! plain mean-field start or the prior start, sigma stays at the
//! identity and plays no role.

use crate::approx::{LcaVbApprox, SymmetrizedApprox};
use crate::engine::BridgeTarget;
use crate::error::{Result, SbsError};
use crate::math::{beta_ln_pdf, dirichlet_ln_pdf, logsumexp};
use crate::rng::SubRng;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Beta as BetaDist, Distribution};
use serde::{Deserialize, Serialize};

/// Binary response matrix, n subjects by q items.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LcaData {
    pub y: Vec<Vec<u8>>,
    pub q: usize,
}

impl LcaData {
    pub fn new(y: Vec<Vec<u8>>) -> Result<Self> {
        let q = y.first().map_or(0, Vec::len);
        if y.is_empty() || q == 0 {
            return Err(SbsError::InvalidData(
                "response matrix must have at least one row and one column".into(),
            ));
        }
        for (i, row) in y.iter().enumerate() {
            if row.len() != q {
                return Err(SbsError::InvalidData(format!(
                    "row {i} has {} items, expected {q}",
                    row.len()
                )));
            }
            if let Some(&v) = row.iter().find(|&&v| v > 1) {
                return Err(SbsError::InvalidData(format!(
                    "row {i} holds non-binary value {v}"
                )));
            }
        }
        Ok(LcaData { y, q })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }
}

/// Prior hyperparameters: Dirichlet(d) weights and Beta(a, b) shapes.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LcaHyper {
    pub d: f64,
    pub a: f64,
    pub b: f64,
}

impl Default for LcaHyper {
    fn default() -> Self {
        LcaHyper {
            d: 2.0,
            a: 2.0,
            b: 2.0,
        }
    }
}

impl LcaHyper {
    pub fn validate(&self) -> Result<()> {
        if self.d > 0.0 && self.a > 0.0 && self.b > 0.0 {
            Ok(())
        } else {
            Err(SbsError::InvalidConfig(
                "LCA hyperparameters must be strictly positive".into(),
            ))
        }
    }
}

/// Full latent state: assignments, item probabilities, proportions and
/// the class relabeling used by the symmetrized start.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LcaState {
    pub z: Vec<usize>,
    pub gamma: Vec<Vec<f64>>,
    pub pi: Vec<f64>,
    pub sigma: Vec<usize>,
}

impl LcaState {
    /// Applies a class relabeling: old class k becomes `perm[k]`. The
    /// model's joint density is invariant under this operation.
    pub fn relabel(&self, perm: &[usize]) -> LcaState {
        let g = self.pi.len();
        let mut gamma = vec![Vec::new(); g];
        let mut pi = vec![0.0; g];
        let mut sigma = vec![0usize; g];
        for k in 0..g {
            gamma[perm[k]] = self.gamma[k].clone();
            pi[perm[k]] = self.pi[k];
            sigma[perm[k]] = self.sigma[k];
        }
        LcaState {
            z: self.z.iter().map(|&zi| perm[zi]).collect(),
            gamma,
            pi,
            sigma,
        }
    }
}

/// Log likelihood of the responses given assignments and item
/// probabilities.
pub fn log_lik_lca(state: &LcaState, data: &LcaData) -> f64 {
    let mut ll = 0.0;
    for (row, &zi) in data.y.iter().zip(&state.z) {
        let gk = &state.gamma[zi];
        for (j, &y) in row.iter().enumerate() {
            ll += if y == 1 {
                gk[j].ln()
            } else {
                (1.0 - gk[j]).ln()
            };
        }
    }
    ll
}

/// Log prior density of (Z, gamma, pi); the relabeling component is not
/// included.
pub fn log_prior_lca(state: &LcaState, hyper: &LcaHyper) -> f64 {
    let mut lp: f64 = state.z.iter().map(|&zi| state.pi[zi].ln()).sum();
    for row in &state.gamma {
        for &gkj in row {
            lp += beta_ln_pdf(gkj, hyper.a, hyper.b);
        }
    }
    let delta = vec![hyper.d; state.pi.len()];
    lp + dirichlet_ln_pdf(&state.pi, &delta)
}

/// Joint log density of data and latent state.
pub fn log_joint_lca(state: &LcaState, data: &LcaData, hyper: &LcaHyper) -> f64 {
    log_lik_lca(state, data) + log_prior_lca(state, hyper)
}

/// Draws parameters and data from the prior predictive.
pub fn simulate_lca_prior(
    n: usize,
    q: usize,
    g: usize,
    hyper: &LcaHyper,
    rng: &mut SubRng,
) -> (LcaState, LcaData) {
    let pi = crate::approx::lca_vb::sample_dirichlet(&vec![hyper.d; g], rng);
    let gamma: Vec<Vec<f64>> = (0..g)
        .map(|_| {
            (0..q)
                .map(|_| {
                    BetaDist::new(hyper.a, hyper.b)
                        .expect("positive shapes")
                        .sample(rng)
                })
                .collect()
        })
        .collect();
    let z: Vec<usize> = (0..n).map(|_| sample_categorical(&pi, rng)).collect();
    let y = z
        .iter()
        .map(|&zi| {
            (0..q)
                .map(|j| u8::from(rng.random::<f64>() < gamma[zi][j]))
                .collect()
        })
        .collect();
    let state = LcaState {
        z,
        gamma,
        pi,
        sigma: (0..g).collect(),
    };
    (state, LcaData { y, q })
}

fn sample_categorical(probs: &[f64], rng: &mut SubRng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (k, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return k;
        }
    }
    probs.len() - 1
}

fn sample_log_categorical(log_weights: &[f64], rng: &mut SubRng) -> usize {
    let lse = logsumexp(log_weights);
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (k, &lw) in log_weights.iter().enumerate() {
        acc += (lw - lse).exp();
        if u < acc {
            return k;
        }
    }
    log_weights.len() - 1
}

/// Start distribution of the LCA bridge.
pub enum LcaStart {
    /// Plain mean-field fit; concentrates on one labeling.
    Vb(LcaVbApprox),
    /// Permutation-averaged fit; the target then mixes over relabelings.
    SymVb(SymmetrizedApprox),
    /// The prior itself, giving the prior-start path.
    Prior,
}

/// Bridge target for latent class analysis.
pub struct LcaTarget {
    data: LcaData,
    hyper: LcaHyper,
    g: usize,
    start: LcaStart,
}

impl LcaTarget {
    pub fn new(data: LcaData, hyper: LcaHyper, g: usize, start: LcaStart) -> Result<Self> {
        hyper.validate()?;
        if g == 0 {
            return Err(SbsError::InvalidConfig("g must be at least 1".into()));
        }
        let check = |ag: usize, aq: usize, an: usize| -> Result<()> {
            if ag != g {
                return Err(SbsError::InvalidConfig(format!(
                    "approximation has {ag} classes, target has {g}"
                )));
            }
            if aq != data.q || an != data.n() {
                return Err(SbsError::InvalidConfig(format!(
                    "approximation was fitted to {an}x{aq} data, target data is {}x{}",
                    data.n(),
                    data.q
                )));
            }
            Ok(())
        };
        match &start {
            LcaStart::Vb(f) => check(f.g(), f.q(), f.n())?,
            LcaStart::SymVb(s) => check(s.base.g(), s.base.q(), s.base.n())?,
            LcaStart::Prior => {}
        }
        Ok(LcaTarget {
            data,
            hyper,
            g,
            start,
        })
    }

    pub fn data(&self) -> &LcaData {
        &self.data
    }

    pub fn groups(&self) -> usize {
        self.g
    }

    fn ln_g_factorial(&self) -> f64 {
        (2..=self.g).map(|v| (v as f64).ln()).sum()
    }

    /// Start-distribution Beta parameters for gamma_kj, after applying
    /// the state's relabeling where one is in play.
    fn start_beta_params(&self, k: usize, j: usize, sigma: &[usize]) -> (f64, f64) {
        match &self.start {
            LcaStart::Vb(f) => (f.alpha_params[k][j], f.beta_params[k][j]),
            LcaStart::SymVb(s) => (
                s.base.alpha_params[sigma[k]][j],
                s.base.beta_params[sigma[k]][j],
            ),
            LcaStart::Prior => (self.hyper.a, self.hyper.b),
        }
    }

    fn start_dirichlet_param(&self, k: usize, sigma: &[usize]) -> f64 {
        match &self.start {
            LcaStart::Vb(f) => f.dirichlet_params[k],
            LcaStart::SymVb(s) => s.base.dirichlet_params[sigma[k]],
            LcaStart::Prior => self.hyper.d,
        }
    }

    /// Log weight the start distribution gives assignment z_i = k; for
    /// the prior start this is the current log pi_k.
    fn start_assign_logweight(&self, i: usize, k: usize, state: &LcaState) -> f64 {
        match &self.start {
            LcaStart::Vb(f) => f.assign_probs[i][k].ln(),
            LcaStart::SymVb(s) => s.base.assign_probs[i][state.sigma[k]].ln(),
            LcaStart::Prior => state.pi[k].ln(),
        }
    }

    /// Beta parameters of the tempered full conditional for gamma_kj
    /// given the class counts, linear in rho between the start parameters
    /// and the conjugate posterior parameters.
    pub(crate) fn tempered_beta_params(
        &self,
        k: usize,
        j: usize,
        s_kj: f64,
        n_k: f64,
        rho: f64,
        sigma: &[usize],
    ) -> (f64, f64) {
        let (a0, b0) = self.start_beta_params(k, j, sigma);
        (
            (1.0 - rho) * a0 + rho * (self.hyper.a + s_kj),
            (1.0 - rho) * b0 + rho * (self.hyper.b + n_k - s_kj),
        )
    }

    /// Dirichlet parameters of the tempered full conditional for pi.
    pub(crate) fn tempered_dirichlet_params(
        &self,
        counts: &[f64],
        rho: f64,
        sigma: &[usize],
    ) -> Vec<f64> {
        (0..self.g)
            .map(|k| {
                let d0 = self.start_dirichlet_param(k, sigma);
                (1.0 - rho) * d0 + rho * (self.hyper.d + counts[k])
            })
            .collect()
    }

    fn class_counts(&self, z: &[usize]) -> (Vec<f64>, Vec<Vec<f64>>) {
        let mut counts = vec![0.0; self.g];
        let mut s = vec![vec![0.0; self.data.q]; self.g];
        for (row, &zi) in self.data.y.iter().zip(z) {
            counts[zi] += 1.0;
            for (j, &y) in row.iter().enumerate() {
                s[zi][j] += y as f64;
            }
        }
        (counts, s)
    }

    fn log_lik_row_in_class(&self, i: usize, k: usize, gamma: &[Vec<f64>]) -> f64 {
        self.data.y[i]
            .iter()
            .enumerate()
            .map(|(j, &y)| {
                if y == 1 {
                    gamma[k][j].ln()
                } else {
                    (1.0 - gamma[k][j]).ln()
                }
            })
            .sum()
    }
}

impl BridgeTarget for LcaTarget {
    type State = LcaState;

    fn log_prior(&self, state: &LcaState) -> f64 {
        let base = log_prior_lca(state, &self.hyper);
        match self.start {
            // uniform prior over the relabeling component
            LcaStart::SymVb(_) => base - self.ln_g_factorial(),
            _ => base,
        }
    }

    fn log_lik(&self, state: &LcaState) -> f64 {
        log_lik_lca(state, &self.data)
    }

    fn log_approx(&self, state: &LcaState) -> f64 {
        match &self.start {
            LcaStart::Vb(f) => f.log_density(state),
            LcaStart::SymVb(s) => {
                s.log_component_density(state, &state.sigma) - self.ln_g_factorial()
            }
            LcaStart::Prior => log_prior_lca(state, &self.hyper),
        }
    }

    fn sample_approx(&self, rng: &mut SubRng) -> LcaState {
        match &self.start {
            LcaStart::Vb(f) => f.sample(rng),
            LcaStart::SymVb(s) => s.sample(rng),
            LcaStart::Prior => {
                let pi = crate::approx::lca_vb::sample_dirichlet(&vec![self.hyper.d; self.g], rng);
                let gamma = (0..self.g)
                    .map(|_| {
                        (0..self.data.q)
                            .map(|_| {
                                BetaDist::new(self.hyper.a, self.hyper.b)
                                    .expect("positive shapes")
                                    .sample(rng)
                            })
                            .collect()
                    })
                    .collect();
                let z = (0..self.data.n())
                    .map(|_| sample_categorical(&pi, rng))
                    .collect();
                LcaState {
                    z,
                    gamma,
                    pi,
                    sigma: (0..self.g).collect(),
                }
            }
        }
    }

    /// Systematic Gibbs sweep through the tempered full conditionals:
    /// relabeling, assignments, item probabilities, proportions. Every
    /// conditional is available in closed form because the tempered
    /// density stays within the conjugate families. Symmetrized starts
    /// close the sweep with a uniform class renaming, a density-
    /// preserving move that keeps the label modes exchanged.
    fn move_kernel(&self, state: &mut LcaState, rho: f64, rng: &mut SubRng) {
        if let LcaStart::SymVb(sym) = &self.start {
            // p(sigma | rest) ∝ exp((1 - rho) log q_sigma(state))
            let log_weights: Vec<f64> = sym
                .permutations()
                .iter()
                .map(|p| (1.0 - rho) * sym.log_component_density(state, p))
                .collect();
            let idx = sample_log_categorical(&log_weights, rng);
            state.sigma = sym.permutations()[idx].clone();
        }

        for i in 0..self.data.n() {
            let log_weights: Vec<f64> = (0..self.g)
                .map(|k| {
                    (1.0 - rho) * self.start_assign_logweight(i, k, state)
                        + rho
                            * (state.pi[k].ln() + self.log_lik_row_in_class(i, k, &state.gamma))
                })
                .collect();
            state.z[i] = sample_log_categorical(&log_weights, rng);
        }

        let (counts, s) = self.class_counts(&state.z);
        for k in 0..self.g {
            for j in 0..self.data.q {
                let (a, b) =
                    self.tempered_beta_params(k, j, s[k][j], counts[k], rho, &state.sigma);
                state.gamma[k][j] = BetaDist::new(a, b)
                    .expect("positive shapes")
                    .sample(rng);
            }
        }

        let d = self.tempered_dirichlet_params(&counts, rho, &state.sigma);
        state.pi = crate::approx::lca_vb::sample_dirichlet(&d, rng);

        if matches!(self.start, LcaStart::SymVb(_)) {
            // The sigma composition inside relabel keeps every class
            // aligned with the same approximation component, so the
            // tempered density is invariant at every rho. Without this
            // move the stored labels freeze once rho is close to 1,
            // where the sigma conditional alone no longer drags the
            // parameters between modes.
            let mut perm: Vec<usize> = (0..self.g).collect();
            perm.shuffle(rng);
            *state = state.relabel(&perm);
        }
    }

    fn param_names(&self) -> Vec<String> {
        let mut names: Vec<String> = (1..=self.g).map(|k| format!("pi_{k}")).collect();
        for k in 1..=self.g {
            for j in 1..=self.data.q {
                names.push(format!("gamma_{k}_{j}"));
            }
        }
        names
    }

    fn flatten(&self, state: &LcaState) -> Vec<f64> {
        let mut out = state.pi.clone();
        for row in &state.gamma {
            out.extend_from_slice(row);
        }
        out
    }
}
