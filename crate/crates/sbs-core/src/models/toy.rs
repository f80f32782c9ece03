//! Small conjugate targets with closed-form posteriors and evidences.
//!
//! These exist to validate the engine: every tempered distribution along
//! their bridge paths stays in a known family, so kernels can draw
//! exactly and every estimate has an analytic oracle.

use crate::engine::BridgeTarget;
use crate::math::{ln_beta, normal_ln_pdf};
use crate::rng::SubRng;
use rand::Rng;
use rand_distr::{Beta as BetaDist, Distribution, StandardNormal};

/// Scalar Gaussian mean with known observation variance.
///
/// Prior N(mu0, v0), observations N(theta, s2), start distribution
/// N(start_mean, start_var). Every tempered density is Gaussian, so the
/// kernel draws independently from the exact intermediate distribution.
#[derive(Debug, Clone)]
pub struct GaussianMeanModel {
    pub data: Vec<f64>,
    pub mu0: f64,
    pub v0: f64,
    pub s2: f64,
    pub start_mean: f64,
    pub start_var: f64,
}

impl GaussianMeanModel {
    pub fn new(data: Vec<f64>, mu0: f64, v0: f64, s2: f64, start: (f64, f64)) -> Self {
        GaussianMeanModel {
            data,
            mu0,
            v0,
            s2,
            start_mean: start.0,
            start_var: start.1,
        }
    }

    /// Start at the prior (the prior-path variant).
    pub fn with_prior_start(data: Vec<f64>, mu0: f64, v0: f64, s2: f64) -> Self {
        Self::new(data, mu0, v0, s2, (mu0, v0))
    }

    /// Start at the exact posterior; alpha is then constant and the
    /// bridge collapses to a single step.
    pub fn with_posterior_start(data: Vec<f64>, mu0: f64, v0: f64, s2: f64) -> Self {
        let tmp = Self::with_prior_start(data, mu0, v0, s2);
        let (pm, pv) = tmp.posterior_moments();
        Self::new(tmp.data, mu0, v0, s2, (pm, pv))
    }

    /// Exact posterior mean and variance.
    pub fn posterior_moments(&self) -> (f64, f64) {
        let n = self.data.len() as f64;
        let sum: f64 = self.data.iter().sum();
        let prec = 1.0 / self.v0 + n / self.s2;
        let mean = (self.mu0 / self.v0 + sum / self.s2) / prec;
        (mean, 1.0 / prec)
    }

    /// Exact log marginal likelihood via the chain of one-step-ahead
    /// predictive densities.
    pub fn log_evidence(&self) -> f64 {
        let mut mean = self.mu0;
        let mut var = self.v0;
        let mut total = 0.0;
        for &y in &self.data {
            total += normal_ln_pdf(y, mean, var + self.s2);
            let k = var / (var + self.s2);
            mean += k * (y - mean);
            var *= 1.0 - k;
        }
        total
    }

    /// Mean and variance of the tempered density at `rho`.
    fn tempered_moments(&self, rho: f64) -> (f64, f64) {
        let n = self.data.len() as f64;
        let sum: f64 = self.data.iter().sum();
        let prec = (1.0 - rho) / self.start_var + rho * (1.0 / self.v0 + n / self.s2);
        let lin = (1.0 - rho) * self.start_mean / self.start_var
            + rho * (self.mu0 / self.v0 + sum / self.s2);
        (lin / prec, 1.0 / prec)
    }
}

impl BridgeTarget for GaussianMeanModel {
    type State = f64;

    fn log_prior(&self, theta: &f64) -> f64 {
        normal_ln_pdf(*theta, self.mu0, self.v0)
    }

    fn log_lik(&self, theta: &f64) -> f64 {
        self.data
            .iter()
            .map(|&y| normal_ln_pdf(y, *theta, self.s2))
            .sum()
    }

    fn log_approx(&self, theta: &f64) -> f64 {
        normal_ln_pdf(*theta, self.start_mean, self.start_var)
    }

    fn sample_approx(&self, rng: &mut SubRng) -> f64 {
        let z: f64 = rng.sample(StandardNormal);
        self.start_mean + self.start_var.sqrt() * z
    }

    fn move_kernel(&self, theta: &mut f64, rho: f64, rng: &mut SubRng) {
        let (mean, var) = self.tempered_moments(rho);
        let z: f64 = rng.sample(StandardNormal);
        *theta = mean + var.sqrt() * z;
    }

    fn param_names(&self) -> Vec<String> {
        vec!["theta".into()]
    }

    fn flatten(&self, theta: &f64) -> Vec<f64> {
        vec![*theta]
    }
}

/// Bernoulli success probability with a Beta prior.
///
/// Likelihood theta^k (1-theta)^(n-k) for k successes in n trials; the
/// start distribution is any Beta, so every tempered density is Beta and
/// the kernel draws exactly.
#[derive(Debug, Clone)]
pub struct BetaBinomialModel {
    pub n: u64,
    pub k: u64,
    pub a0: f64,
    pub b0: f64,
    pub start_a: f64,
    pub start_b: f64,
}

impl BetaBinomialModel {
    pub fn new(n: u64, k: u64, a0: f64, b0: f64, start: (f64, f64)) -> Self {
        assert!(k <= n);
        BetaBinomialModel {
            n,
            k,
            a0,
            b0,
            start_a: start.0,
            start_b: start.1,
        }
    }

    pub fn with_prior_start(n: u64, k: u64, a0: f64, b0: f64) -> Self {
        Self::new(n, k, a0, b0, (a0, b0))
    }

    /// log p(Y) = log B(a0 + k, b0 + n - k) - log B(a0, b0).
    pub fn log_evidence(&self) -> f64 {
        let k = self.k as f64;
        let nk = (self.n - self.k) as f64;
        ln_beta(self.a0 + k, self.b0 + nk) - ln_beta(self.a0, self.b0)
    }

    /// Beta parameters of the tempered density at `rho`.
    fn tempered_params(&self, rho: f64) -> (f64, f64) {
        let k = self.k as f64;
        let nk = (self.n - self.k) as f64;
        let a = (1.0 - rho) * self.start_a + rho * (self.a0 + k);
        let b = (1.0 - rho) * self.start_b + rho * (self.b0 + nk);
        (a, b)
    }
}

impl BridgeTarget for BetaBinomialModel {
    type State = f64;

    fn log_prior(&self, theta: &f64) -> f64 {
        crate::math::beta_ln_pdf(*theta, self.a0, self.b0)
    }

    fn log_lik(&self, theta: &f64) -> f64 {
        if *theta <= 0.0 || *theta >= 1.0 {
            return f64::NEG_INFINITY;
        }
        self.k as f64 * theta.ln() + (self.n - self.k) as f64 * (1.0 - theta).ln()
    }

    fn log_approx(&self, theta: &f64) -> f64 {
        crate::math::beta_ln_pdf(*theta, self.start_a, self.start_b)
    }

    fn sample_approx(&self, rng: &mut SubRng) -> f64 {
        BetaDist::new(self.start_a, self.start_b)
            .expect("valid Beta parameters")
            .sample(rng)
    }

    fn move_kernel(&self, theta: &mut f64, rho: f64, rng: &mut SubRng) {
        let (a, b) = self.tempered_params(rho);
        *theta = BetaDist::new(a, b).expect("valid Beta parameters").sample(rng);
    }

    fn param_names(&self) -> Vec<String> {
        vec!["theta".into()]
    }

    fn flatten(&self, theta: &f64) -> Vec<f64> {
        vec![*theta]
    }
}

/// Three-state discrete target with a random-walk Metropolis kernel.
///
/// Everything is enumerable, so tempered probabilities are exact and
/// kernel stationarity can be tested by goodness of fit. Unlike the two
/// conjugate toys, the kernel here is a genuine accept/reject move.
#[derive(Debug, Clone)]
pub struct DiscreteToyModel {
    pub prior: [f64; 3],
    pub lik: [f64; 3],
    pub start: [f64; 3],
}

impl DiscreteToyModel {
    pub fn new(prior: [f64; 3], lik: [f64; 3], start: [f64; 3]) -> Self {
        DiscreteToyModel { prior, lik, start }
    }

    /// Exact tempered probabilities at `rho`.
    pub fn tempered_probs(&self, rho: f64) -> [f64; 3] {
        let mut p = [0.0; 3];
        for j in 0..3 {
            p[j] = self.start[j].powf(1.0 - rho) * (self.lik[j] * self.prior[j]).powf(rho);
        }
        let z: f64 = p.iter().sum();
        for v in &mut p {
            *v /= z;
        }
        p
    }

    /// Exact draw from the tempered distribution, for test harnesses.
    pub fn sample_tempered(&self, rho: f64, rng: &mut SubRng) -> usize {
        let p = self.tempered_probs(rho);
        let u: f64 = rng.random();
        if u < p[0] {
            0
        } else if u < p[0] + p[1] {
            1
        } else {
            2
        }
    }

    fn log_tempered_at(&self, j: usize, rho: f64) -> f64 {
        (1.0 - rho) * self.start[j].ln() + rho * (self.lik[j] * self.prior[j]).ln()
    }
}

impl BridgeTarget for DiscreteToyModel {
    type State = usize;

    fn log_prior(&self, j: &usize) -> f64 {
        self.prior[*j].ln()
    }

    fn log_lik(&self, j: &usize) -> f64 {
        self.lik[*j].ln()
    }

    fn log_approx(&self, j: &usize) -> f64 {
        self.start[*j].ln()
    }

    fn sample_approx(&self, rng: &mut SubRng) -> usize {
        self.sample_tempered(0.0, rng)
    }

    fn move_kernel(&self, j: &mut usize, rho: f64, rng: &mut SubRng) {
        let proposal = rng.random_range(0..3usize);
        let log_ratio = self.log_tempered_at(proposal, rho) - self.log_tempered_at(*j, rho);
        if log_ratio >= 0.0 || rng.random::<f64>() < log_ratio.exp() {
            *j = proposal;
        }
    }

    fn param_names(&self) -> Vec<String> {
        vec!["state".into()]
    }

    fn flatten(&self, j: &usize) -> Vec<f64> {
        vec![*j as f64]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{run_sbs, run_sbs_with_init, PathVariant, SamplerConfig};
    use crate::math::weighted_mean;
    use crate::rng::seeded;
    use statrs::distribution::{ChiSquared, ContinuousCDF};

    fn config(m: usize, seed: u64) -> SamplerConfig {
        SamplerConfig {
            particles: m,
            master_seed: seed,
            ..SamplerConfig::default()
        }
    }

    fn gaussian_data() -> Vec<f64> {
        vec![1.3, 0.2, -0.4, 2.1, 0.9, 1.7, 0.3, 1.1]
    }

    #[test]
    fn posterior_start_collapses_to_one_step() {
        let model = GaussianMeanModel::with_posterior_start(gaussian_data(), 0.0, 4.0, 1.0);
        let out = run_sbs(&model, &config(500, 11)).unwrap();
        assert_eq!(out.trace.rho_seq, vec![0.0, 1.0]);
        let analytic = model.log_evidence();
        assert!(
            (out.log_evidence_product - analytic).abs() < 1e-10,
            "product {} vs analytic {analytic}",
            out.log_evidence_product
        );
        assert!((out.log_evidence_path - analytic).abs() < 1e-10);
    }

    #[test]
    fn prior_start_recovers_posterior_mean() {
        let model = GaussianMeanModel::with_prior_start(gaussian_data(), 0.0, 4.0, 1.0);
        let cfg = config(4000, 5);
        let out = run_sbs(&model, &cfg).unwrap();
        let (pm, pv) = model.posterior_moments();
        let flat: Vec<f64> = out.final_cloud.particles.clone();
        let got = weighted_mean(&flat, &out.final_cloud.norm_weights);
        let se = (pv / crate::engine::ess(&out.final_cloud.norm_weights)).sqrt();
        assert!(
            (got - pm).abs() < 3.0 * se,
            "mean {got} vs posterior {pm} (se {se})"
        );
    }

    #[test]
    fn beta_binomial_evidence_is_tight() {
        let model = BetaBinomialModel::with_prior_start(10, 7, 1.0, 1.0);
        let analytic = model.log_evidence();
        let runs = 20;
        let mut prods = Vec::new();
        for seed in 0..runs {
            let out = run_sbs(&model, &config(500, seed)).unwrap();
            prods.push(out.log_evidence_product);
            assert!(
                (out.log_evidence_path - out.log_evidence_product).abs() < 0.1,
                "path and product estimates disagree"
            );
        }
        let mean = prods.iter().sum::<f64>() / runs as f64;
        assert!(
            (mean - analytic).abs() < 0.05,
            "mean product estimate {mean} vs analytic {analytic}"
        );
    }

    #[test]
    fn beta_binomial_evidence_unbiased_on_raw_scale() {
        let model = BetaBinomialModel::with_prior_start(10, 7, 1.0, 1.0);
        let z = model.log_evidence().exp();
        let runs = 250;
        let mut zs = Vec::with_capacity(runs);
        for seed in 0..runs as u64 {
            let out = run_sbs(&model, &config(200, 1000 + seed)).unwrap();
            zs.push(out.log_evidence_product.exp());
        }
        let mean = zs.iter().sum::<f64>() / runs as f64;
        let var = zs.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (runs - 1) as f64;
        let se = (var / runs as f64).sqrt();
        assert!(
            (mean - z).abs() < 3.0 * se,
            "raw-scale mean {mean} vs analytic {z} (se {se})"
        );
    }

    #[test]
    fn importance_init_corrects_start_mismatch() {
        // prior-path run whose initial cloud comes from a heavier-tailed
        // Beta(0.5, 0.5): the ratio prior/init is bounded, so the
        // importance weights keep the evidence estimate honest
        let model = BetaBinomialModel::with_prior_start(10, 7, 1.0, 1.0);
        let init = BetaBinomialModel::new(10, 7, 1.0, 1.0, (0.5, 0.5));
        let analytic = model.log_evidence();
        let runs = 20;
        let mut prods = Vec::new();
        let mut cfg = config(500, 0);
        cfg.path_variant = PathVariant::CbsIs;
        for seed in 0..runs {
            cfg.master_seed = 300 + seed;
            let out = run_sbs_with_init(&model, Some(&init), &cfg).unwrap();
            assert!(out.trace.init_log_ratio.is_finite());
            assert!(out.trace.init_ess <= cfg.particles as f64);
            prods.push(out.log_evidence_product);
        }
        let mean = prods.iter().sum::<f64>() / runs as f64;
        assert!(
            (mean - analytic).abs() < 0.05,
            "importance-initialized mean {mean} vs analytic {analytic}"
        );
    }

    #[test]
    fn concentrated_init_degrades_initial_ess() {
        // initializing the prior path at something posterior-like makes
        // the first weights prior/posterior, which is exactly the
        // pathology the initial ESS is meant to expose
        let model = BetaBinomialModel::with_prior_start(10, 7, 1.0, 1.0);
        let init = BetaBinomialModel::new(10, 7, 1.0, 1.0, (8.0, 4.0));
        let mut cfg = config(2000, 17);
        cfg.path_variant = PathVariant::CbsIs;
        let out = run_sbs_with_init(&model, Some(&init), &cfg).unwrap();
        assert!(
            out.trace.init_ess < 0.5 * cfg.particles as f64,
            "initial ESS {} not degraded",
            out.trace.init_ess
        );
        assert!(out.log_evidence_product.is_finite());
    }

    #[test]
    fn runs_are_identical_across_thread_counts() {
        let model = BetaBinomialModel::with_prior_start(10, 7, 1.0, 1.0);
        let cfg = config(400, 99);
        let run_in_pool = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap();
            pool.install(|| run_sbs(&model, &cfg).unwrap())
        };
        let a = run_in_pool(1);
        let b = run_in_pool(4);
        assert_eq!(a.trace.rho_seq, b.trace.rho_seq);
        assert_eq!(a.trace.step_log_ratio, b.trace.step_log_ratio);
        assert_eq!(a.log_evidence_product, b.log_evidence_product);
        assert_eq!(a.final_cloud.particles, b.final_cloud.particles);
        assert_eq!(a.final_cloud.norm_weights, b.final_cloud.norm_weights);
    }

    #[test]
    fn discrete_kernel_is_stationary_at_each_rho() {
        let model = DiscreteToyModel::new([0.5, 0.3, 0.2], [0.9, 0.05, 0.05], [1.0 / 3.0; 3]);
        let n = 30_000;
        for (case, rho) in [(0u64, 0.0), (1, 0.5), (2, 1.0)] {
            let probs = model.tempered_probs(rho);
            let mut counts = [0usize; 3];
            let mut rng = seeded(500 + case);
            for _ in 0..n {
                let mut s = model.sample_tempered(rho, &mut rng);
                for _ in 0..5 {
                    model.move_kernel(&mut s, rho, &mut rng);
                }
                counts[s] += 1;
            }
            let mut chi2 = 0.0;
            for j in 0..3 {
                let expect = probs[j] * n as f64;
                let diff = counts[j] as f64 - expect;
                chi2 += diff * diff / expect;
            }
            let p = 1.0 - ChiSquared::new(2.0).unwrap().cdf(chi2);
            assert!(p > 0.01, "stationarity rejected at rho={rho}: chi2={chi2:.2}, p={p:.4}");
        }
    }

    #[test]
    fn discrete_bridge_matches_enumerated_posterior() {
        let model = DiscreteToyModel::new([0.5, 0.3, 0.2], [0.9, 0.05, 0.05], [1.0 / 3.0; 3]);
        let out = run_sbs(&model, &config(20_000, 3)).unwrap();
        let post = model.tempered_probs(1.0);
        let mut mass = [0.0; 3];
        for (s, w) in out
            .final_cloud
            .particles
            .iter()
            .zip(&out.final_cloud.norm_weights)
        {
            mass[*s] += w;
        }
        for j in 0..3 {
            assert!(
                (mass[j] - post[j]).abs() < 0.02,
                "state {j}: weighted mass {} vs exact {}",
                mass[j],
                post[j]
            );
        }
        // evidence: sum_j prior_j lik_j
        let z: f64 = (0..3).map(|j| model.prior[j] * model.lik[j]).sum();
        assert!((out.log_evidence_product - z.ln()).abs() < 0.05);
    }
}
