//! calibrate: simulation-based checks of posterior representations,
//! either uniformity of posterior quantiles for the latent class model
//! or interval coverage for the block model.

use super::{artifact_path, write_text};
use crate::config::ExperimentConfig;
use sbs_core::calibration::{
    run_lca_calibration, run_sbmreg_coverage, LcaCalConfig, LcaCalMethod, SbmCoverageConfig,
};
use sbs_core::{Result, SbsError};
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StudyKind {
    Lca,
    SbmCoverage,
}

impl FromStr for StudyKind {
    type Err = SbsError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lca" => Ok(StudyKind::Lca),
            "sbm-coverage" | "coverage" => Ok(StudyKind::SbmCoverage),
            other => Err(SbsError::InvalidConfig(format!(
                "unknown study '{other}' (expected lca or sbm-coverage)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct CalibrateOpts {
    pub study: StudyKind,
    /// Posterior representation checked in the latent-class study.
    pub method: LcaCalMethod,
}

pub fn run_calibrate(cfg: &ExperimentConfig, opts: &CalibrateOpts) -> Result<()> {
    match opts.study {
        StudyKind::Lca => calibrate_lca(cfg, opts.method),
        StudyKind::SbmCoverage => calibrate_sbm_coverage(cfg),
    }
}

fn calibrate_lca(cfg: &ExperimentConfig, method: LcaCalMethod) -> Result<()> {
    let sect = &cfg.calibration;
    let base = LcaCalConfig::default();
    let ccfg = LcaCalConfig {
        replicates: sect.replicates.unwrap_or(base.replicates),
        n: sect.n.unwrap_or(base.n),
        q: sect.q,
        g: cfg.g,
        hyper: cfg.lca_hyper,
        sampler: cfg.sampler.clone(),
        master_seed: cfg.seed,
        mc_draws: sect.mc_draws,
    };
    let report = run_lca_calibration(&ccfg, method)?;
    for (name, (ks, p)) in report
        .phi_names
        .iter()
        .zip(report.ks_stats.iter().zip(&report.p_values))
    {
        log::info!("{method} {name}: KS {ks:.4}, p = {p:.4}");
    }

    let csv_path = artifact_path(cfg, "u_values.csv")?;
    let file = std::fs::File::create(&csv_path)?;
    report.write_u_csv(file)?;
    log::info!("wrote {}", csv_path.display());

    let artifact = serde_json::json!({
        "version": env!("CARGO_PKG_VERSION"),
        "study": "lca",
        "method": method.to_string(),
        "config": ccfg,
        "report": report,
    });
    write_text(
        &artifact_path(cfg, "calibration.json")?,
        &serde_json::to_string_pretty(&artifact)?,
    )?;
    Ok(())
}

fn calibrate_sbm_coverage(cfg: &ExperimentConfig) -> Result<()> {
    let sect = &cfg.calibration;
    let base = SbmCoverageConfig::default();
    let ccfg = SbmCoverageConfig {
        replicates: sect.replicates.unwrap_or(base.replicates),
        n: sect.n.unwrap_or(base.n),
        p: sect.p,
        true_groups: sect.true_groups.clone(),
        fit_groups: sect.fit_groups.clone(),
        hyper: cfg.sbm_hyper,
        sampler: cfg.sampler.clone(),
        master_seed: cfg.seed,
        level: sect.level,
        mixture_draws: sect.mixture_draws,
    };
    let report = run_sbmreg_coverage(&ccfg)?;
    log::info!(
        "coverage at level {:.2}: sampler {:.3}, variational {:.3} over {} trials",
        report.level,
        report.sbs_coverage,
        report.vb_coverage,
        report.trials
    );

    let artifact = serde_json::json!({
        "version": env!("CARGO_PKG_VERSION"),
        "study": "sbm-coverage",
        "config": ccfg,
        "report": report,
    });
    write_text(
        &artifact_path(cfg, "coverage.json")?,
        &serde_json::to_string_pretty(&artifact)?,
    )?;
    Ok(())
}
