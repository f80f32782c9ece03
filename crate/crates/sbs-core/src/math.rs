//! Small numerical helpers used throughout the crate.
//!
//! Everything that touches probabilities works on the log scale; these
//! are the stable primitives that make that safe.

use statrs::function::gamma::ln_gamma;

/// log(sum(exp(x))) with the usual max shift. Returns -inf for an empty
/// slice or when every entry is -inf.
pub fn logsumexp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    let s: f64 = xs.iter().map(|&x| (x - m).exp()).sum();
    m + s.ln()
}

/// log(1 + exp(x)) without overflow for large |x|.
pub fn log1pexp(x: f64) -> f64 {
    if x > 33.0 {
        // exp(-x) below f64 epsilon relative to x
        x
    } else if x > -37.0 {
        x.exp().ln_1p()
    } else {
        x.exp()
    }
}

/// log of the logistic function, -log(1 + exp(-x)).
pub fn log_sigmoid(x: f64) -> f64 {
    -log1pexp(-x)
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// log Beta(a, b).
pub fn ln_beta(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

/// log of the Dirichlet normalizing constant B(alpha).
pub fn ln_dirichlet_const(alpha: &[f64]) -> f64 {
    let sum: f64 = alpha.iter().sum();
    alpha.iter().map(|&a| ln_gamma(a)).sum::<f64>() - ln_gamma(sum)
}

/// Beta(a, b) log density at x in (0, 1).
pub fn beta_ln_pdf(x: f64, a: f64, b: f64) -> f64 {
    if x <= 0.0 || x >= 1.0 {
        return f64::NEG_INFINITY;
    }
    (a - 1.0) * x.ln() + (b - 1.0) * (1.0 - x).ln() - ln_beta(a, b)
}

/// Dirichlet(alpha) log density at a point on the simplex.
pub fn dirichlet_ln_pdf(x: &[f64], alpha: &[f64]) -> f64 {
    debug_assert_eq!(x.len(), alpha.len());
    if x.iter().any(|&p| p <= 0.0) {
        return f64::NEG_INFINITY;
    }
    let kernel: f64 = x
        .iter()
        .zip(alpha)
        .map(|(&p, &a)| (a - 1.0) * p.ln())
        .sum();
    kernel - ln_dirichlet_const(alpha)
}

/// Univariate normal log density.
pub fn normal_ln_pdf(x: f64, mean: f64, var: f64) -> f64 {
    let d = x - mean;
    -0.5 * ((2.0 * std::f64::consts::PI * var).ln() + d * d / var)
}

/// Mean under normalized weights.
pub fn weighted_mean(values: &[f64], weights: &[f64]) -> f64 {
    values.iter().zip(weights).map(|(&v, &w)| w * v).sum()
}

/// Variance under normalized weights (population form).
pub fn weighted_variance(values: &[f64], weights: &[f64]) -> f64 {
    let m = weighted_mean(values, weights);
    values
        .iter()
        .zip(weights)
        .map(|(&v, &w)| w * (v - m) * (v - m))
        .sum()
}

/// Smallest value whose cumulative weight reaches `q`. Weights must be
/// normalized; values need not be sorted.
pub fn weighted_quantile(values: &[f64], weights: &[f64], q: f64) -> f64 {
    debug_assert_eq!(values.len(), weights.len());
    debug_assert!(!values.is_empty());
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut cum = 0.0;
    for &i in &idx {
        cum += weights[i];
        if cum >= q {
            return values[i];
        }
    }
    values[*idx.last().unwrap()]
}
