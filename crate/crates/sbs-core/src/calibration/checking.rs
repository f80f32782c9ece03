//! Replicated posterior-calibration checks.
//!
//! The procedure simulates S replicates (theta*, Y*) from the prior
//! predictive, builds a posterior representation for each Y* (a fitted
//! approximation or a sampler run), and reduces every replicate to one
//! U statistic per test functional: the posterior probability mass of
//! {Phi(theta) < Phi(theta*)}. When the representation equals the exact
//! posterior, each U is uniform on [0, 1] across replicates, so a
//! uniformity test on the S values detects miscalibration.

use crate::calibration::ks_uniform_test;
use crate::error::{Result, SbsError};
use crate::rng::derive_seed;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// A replicate that could not be completed, with the reason.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReplicateFailure {
    pub replicate: usize,
    pub message: String,
}

/// Outcome of one checking run: U samples and uniformity tests per
/// functional.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CalibrationReport {
    /// Label of the posterior representation under test.
    pub method: String,
    pub phi_names: Vec<String>,
    /// One row per completed replicate, one column per functional.
    pub u_rows: Vec<Vec<f64>>,
    /// Replicate index of each row.
    pub replicate_ids: Vec<usize>,
    /// Seed handed to each completed replicate.
    pub replicate_seeds: Vec<u64>,
    /// Kolmogorov-Smirnov distance to the uniform, per functional.
    pub ks_stats: Vec<f64>,
    /// Uniformity p-value, per functional.
    pub p_values: Vec<f64>,
    /// Lattice size used for the discrete test, if any.
    pub lattice_size: Option<usize>,
    /// Number of replicates requested.
    pub requested: usize,
    pub failures: Vec<ReplicateFailure>,
}

impl CalibrationReport {
    /// U values of one functional across completed replicates.
    pub fn u_column(&self, phi_index: usize) -> Vec<f64> {
        self.u_rows.iter().map(|row| row[phi_index]).collect()
    }

    /// Writes the U table as CSV: replicate, seed, one column per
    /// functional.
    pub fn write_u_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["replicate".to_string(), "seed".to_string()];
        header.extend(self.phi_names.iter().cloned());
        w.write_record(&header)?;
        for (row_idx, row) in self.u_rows.iter().enumerate() {
            let mut record = vec![
                self.replicate_ids[row_idx].to_string(),
                self.replicate_seeds[row_idx].to_string(),
            ];
            record.extend(row.iter().map(|u| format!("{u:.17}")));
            w.write_record(&record)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Runs the full checking procedure.
///
/// `replicate(index, seed)` owns steps 1 to 3 for one replicate: it
/// simulates its own (theta*, Y*) pair from the seed, builds the
/// posterior representation, and returns one U value per functional in
/// `phi_names` order. Replicates run as independent parallel jobs with
/// seeds derived from `master_seed`, so results do not depend on the
/// thread count. Individual failures are tolerated up to 5% of S and
/// recorded in the report; beyond that the whole run errors.
pub fn run_checking_procedure<F>(
    method: &str,
    phi_names: &[String],
    s: usize,
    master_seed: u64,
    lattice_size: Option<usize>,
    replicate: F,
) -> Result<CalibrationReport>
where
    F: Fn(usize, u64) -> Result<Vec<f64>> + Sync,
{
    if s == 0 {
        return Err(SbsError::InvalidConfig(
            "calibration needs at least one replicate".into(),
        ));
    }
    if phi_names.is_empty() {
        return Err(SbsError::InvalidConfig(
            "calibration needs at least one test functional".into(),
        ));
    }

    let results: Vec<(u64, std::result::Result<Vec<f64>, String>)> = (0..s)
        .into_par_iter()
        .map(|rep| {
            let seed = derive_seed(master_seed, rep as u64);
            (seed, replicate(rep, seed).map_err(|e| e.to_string()))
        })
        .collect();

    let mut u_rows = Vec::with_capacity(s);
    let mut replicate_ids = Vec::with_capacity(s);
    let mut replicate_seeds = Vec::with_capacity(s);
    let mut failures = Vec::new();
    for (rep, (seed, res)) in results.into_iter().enumerate() {
        match res {
            Ok(us) => {
                if us.len() != phi_names.len() {
                    return Err(SbsError::Calibration(format!(
                        "replicate {rep} returned {} U values for {} functionals",
                        us.len(),
                        phi_names.len()
                    )));
                }
                if let Some(&bad) = us.iter().find(|u| !(0.0..=1.0).contains(*u)) {
                    return Err(SbsError::Calibration(format!(
                        "replicate {rep} produced U = {bad} outside [0, 1]"
                    )));
                }
                u_rows.push(us);
                replicate_ids.push(rep);
                replicate_seeds.push(seed);
            }
            Err(message) => failures.push(ReplicateFailure {
                replicate: rep,
                message,
            }),
        }
    }

    if failures.len() * 20 > s {
        return Err(SbsError::Calibration(format!(
            "{} of {s} replicates failed (tolerated at most 5%); first failure: {}",
            failures.len(),
            failures[0].message
        )));
    }

    let mut ks_stats = Vec::with_capacity(phi_names.len());
    let mut p_values = Vec::with_capacity(phi_names.len());
    for phi_idx in 0..phi_names.len() {
        let col: Vec<f64> = u_rows.iter().map(|row| row[phi_idx]).collect();
        let (d, p) = ks_uniform_test(&col, lattice_size)?;
        ks_stats.push(d);
        p_values.push(p);
    }

    Ok(CalibrationReport {
        method: method.to_string(),
        phi_names: phi_names.to_vec(),
        u_rows,
        replicate_ids,
        replicate_seeds,
        ks_stats,
        p_values,
        lattice_size,
        requested: s,
        failures,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calibration::u_statistic;
    use crate::engine::{run_sbs, SamplerConfig};
    use crate::math::weighted_mean;
    use crate::models::toy::GaussianMeanModel;
    use crate::rng::seeded;
    use rand::Rng;
    use rand_distr::StandardNormal;
    use statrs::distribution::{ContinuousCDF, Normal};

    const MU0: f64 = -0.5;
    const V0: f64 = 2.0;
    const S2: f64 = 1.5;
    const N_OBS: usize = 12;

    fn simulate(seed: u64) -> (f64, Vec<f64>) {
        let mut rng = seeded(seed);
        let theta: f64 = MU0 + V0.sqrt() * rng.sample::<f64, _>(StandardNormal);
        let data = (0..N_OBS)
            .map(|_| theta + S2.sqrt() * rng.sample::<f64, _>(StandardNormal))
            .collect();
        (theta, data)
    }

    #[test]
    fn exact_posterior_passes_uniformity() {
        // case (a) with the representation equal to the exact posterior:
        // U is the posterior CDF at theta*, uniform by construction
        let names = vec!["theta".to_string()];
        let report = run_checking_procedure("exact", &names, 200, 5, None, |_, seed| {
            let (theta_star, data) = simulate(seed);
            let model = GaussianMeanModel::with_prior_start(data, MU0, V0, S2);
            let (pm, pv) = model.posterior_moments();
            let posterior = Normal::new(pm, pv.sqrt()).unwrap();
            Ok(vec![posterior.cdf(theta_star)])
        })
        .unwrap();
        assert!(report.failures.is_empty());
        assert_eq!(report.u_rows.len(), 200);
        assert!(
            report.p_values[0] > 0.01,
            "exact posterior rejected: p = {}",
            report.p_values[0]
        );
    }

    #[test]
    fn wrong_posterior_fails_uniformity() {
        // inflating the posterior variance concentrates U around 0.5
        let names = vec!["theta".to_string()];
        let report = run_checking_procedure("inflated", &names, 200, 6, None, |_, seed| {
            let (theta_star, data) = simulate(seed);
            let model = GaussianMeanModel::with_prior_start(data, MU0, V0, S2);
            let (pm, pv) = model.posterior_moments();
            let wrong = Normal::new(pm, (9.0 * pv).sqrt()).unwrap();
            Ok(vec![wrong.cdf(theta_star)])
        })
        .unwrap();
        assert!(
            report.p_values[0] < 0.01,
            "inflated posterior accepted: p = {}",
            report.p_values[0]
        );
    }

    #[test]
    fn bridge_output_passes_uniformity_end_to_end() {
        // case (b) closed loop: weighted U over bridge output started
        // from a deliberately shifted approximation
        let names = vec!["theta".to_string()];
        let report = run_checking_procedure("bridge", &names, 120, 7, None, |_, seed| {
            let (theta_star, data) = simulate(seed);
            let exact = GaussianMeanModel::with_prior_start(data.clone(), MU0, V0, S2);
            let (pm, pv) = exact.posterior_moments();
            let model = GaussianMeanModel::new(data, MU0, V0, S2, (pm + 0.4, 1.8 * pv));
            let cfg = SamplerConfig {
                particles: 400,
                master_seed: seed,
                ..SamplerConfig::default()
            };
            let out = run_sbs(&model, &cfg)?;
            u_statistic(
                theta_star,
                &out.final_cloud.particles,
                &out.final_cloud.norm_weights,
            )
            .map(|u| vec![u])
        })
        .unwrap();
        assert!(
            report.p_values[0] > 0.01,
            "calibrated bridge rejected: p = {}",
            report.p_values[0]
        );
        // the shifted start must not bias the reported posterior mean
        let mut pulls = Vec::new();
        for (&rep, &seed) in report.replicate_ids.iter().zip(&report.replicate_seeds) {
            if rep >= 20 {
                break;
            }
            let (_, data) = simulate(seed);
            let exact = GaussianMeanModel::with_prior_start(data.clone(), MU0, V0, S2);
            let (pm, pv) = exact.posterior_moments();
            let model = GaussianMeanModel::new(data, MU0, V0, S2, (pm + 0.4, 1.8 * pv));
            let cfg = SamplerConfig {
                particles: 400,
                master_seed: seed,
                ..SamplerConfig::default()
            };
            let out = run_sbs(&model, &cfg).unwrap();
            let m = weighted_mean(&out.final_cloud.particles, &out.final_cloud.norm_weights);
            pulls.push((m - pm) / pv.sqrt());
        }
        let avg_pull = pulls.iter().sum::<f64>() / pulls.len() as f64;
        assert!(avg_pull.abs() < 0.2, "posterior means biased: {avg_pull}");
    }

    #[test]
    fn sparse_failures_are_recorded_and_tolerated() {
        let names = vec!["phi".to_string()];
        let report = run_checking_procedure("flaky", &names, 100, 8, None, |rep, seed| {
            if rep == 17 || rep == 58 {
                return Err(SbsError::Calibration("synthetic failure".into()));
            }
            let mut rng = seeded(seed);
            Ok(vec![rng.random::<f64>()])
        })
        .unwrap();
        assert_eq!(report.failures.len(), 2);
        assert_eq!(report.u_rows.len(), 98);
        assert!(!report.replicate_ids.contains(&17));
        assert!(!report.replicate_ids.contains(&58));
    }

    #[test]
    fn widespread_failures_abort_the_run() {
        let names = vec!["phi".to_string()];
        let err = run_checking_procedure("broken", &names, 100, 9, None, |rep, seed| {
            if rep % 10 == 0 {
                return Err(SbsError::Calibration("synthetic failure".into()));
            }
            let mut rng = seeded(seed);
            Ok(vec![rng.random::<f64>()])
        })
        .unwrap_err();
        assert!(matches!(err, SbsError::Calibration(_)));
    }

    #[test]
    fn reports_are_deterministic_and_thread_independent() {
        let names = vec!["phi".to_string()];
        let run = || {
            run_checking_procedure("det", &names, 64, 11, None, |_, seed| {
                let mut rng = seeded(seed);
                Ok(vec![rng.random::<f64>()])
            })
            .unwrap()
        };
        let a = run();
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap();
        let b = pool.install(run);
        assert_eq!(a.u_rows, b.u_rows);
        assert_eq!(a.replicate_seeds, b.replicate_seeds);
        assert_eq!(a.p_values, b.p_values);
    }

    #[test]
    fn u_csv_has_one_row_per_replicate() {
        let names = vec!["a".to_string(), "b".to_string()];
        let report = run_checking_procedure("csv", &names, 12, 13, None, |_, seed| {
            let mut rng = seeded(seed);
            Ok(vec![rng.random(), rng.random()])
        })
        .unwrap();
        let mut buf = Vec::new();
        report.write_u_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.trim().lines().collect();
        assert_eq!(lines.len(), 13);
        assert_eq!(lines[0], "replicate,seed,a,b");
    }

    #[test]
    fn out_of_range_u_is_a_hard_error() {
        let names = vec!["phi".to_string()];
        let err = run_checking_procedure("bad", &names, 20, 14, None, |_, _| Ok(vec![1.5]))
            .unwrap_err();
        assert!(matches!(err, SbsError::Calibration(_)));
    }
}
