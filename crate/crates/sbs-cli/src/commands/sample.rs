//! sample: run the bridge sampler and write the weighted posterior
//! sample plus a run report.

use super::{artifact_path, load_data, write_text, LoadedData};
use crate::config::{ApproxKind, ExperimentConfig, ModelKind};
use sbs_core::approx::{fit_ml_logistic, fit_vb_lca, fit_vb_logistic, fit_vb_sbmreg, symmetrize};
use sbs_core::data::write_particles_csv;
use sbs_core::engine::{
    run_sbs, run_sbs_with_init, BridgeTarget, InitOverride, PathVariant, SamplerConfig,
    SamplerOutput,
};
use sbs_core::models::lca::{LcaData, LcaState, LcaStart, LcaTarget};
use sbs_core::models::logistic::LogisticTarget;
use sbs_core::models::sbmreg::{EdgeData, SbmRegStart, SbmRegTarget};
use sbs_core::report::RunReport;
use sbs_core::rng::SubRng;
use sbs_core::{Result, SbsError};

pub fn run_sample(cfg: &ExperimentConfig) -> Result<()> {
    let model = cfg.require_model()?;
    let data = load_data(model, cfg.require_data_path()?)?;
    let mut scfg = cfg.sampler.clone();
    scfg.master_seed = cfg.seed;

    let result = match data {
        LoadedData::Logistic(d) => sample_logistic(cfg, d, &scfg),
        LoadedData::Lca(d) => sample_lca(cfg, d, &scfg),
        LoadedData::Sbm(d) => sample_sbm(cfg, d, &scfg),
    };
    match result {
        Ok(()) => Ok(()),
        Err(err) => {
            // leave enough behind to diagnose a failed run
            let artifact = serde_json::json!({
                "error": err.to_string(),
                "config": cfg,
            });
            if let Ok(path) = artifact_path(cfg, "failure.json") {
                let _ = write_text(&path, &serde_json::to_string_pretty(&artifact)?);
            }
            Err(err)
        }
    }
}

/// Writes sample.csv and report.json from a finished run.
fn finish<T: BridgeTarget>(
    cfg: &ExperimentConfig,
    label: &str,
    scfg: &SamplerConfig,
    target: &T,
    out: &SamplerOutput<T::State>,
) -> Result<()> {
    let report = RunReport::new(label, scfg, out);
    let report = if cfg.no_timing {
        report.without_timing()
    } else {
        report
    };
    for w in &report.warnings {
        log::warn!("{w}");
    }
    log::info!(
        "{label}: {} steps, log evidence {:.4} (product) / {:.4} (path)",
        report.steps,
        report.log_evidence_product,
        report.log_evidence_path
    );

    let rows: Vec<Vec<f64>> = out
        .final_cloud
        .particles
        .iter()
        .map(|s| target.flatten(s))
        .collect();
    let sample_path = artifact_path(cfg, "sample.csv")?;
    let file = std::fs::File::create(&sample_path)?;
    write_particles_csv(
        file,
        &target.param_names(),
        &rows,
        &out.final_cloud.norm_weights,
    )?;
    log::info!("wrote {}", sample_path.display());

    write_text(
        &artifact_path(cfg, "report.json")?,
        &report.to_json()?,
    )?;
    write_text(
        &artifact_path(cfg, "resolved_config.json")?,
        &serde_json::to_string_pretty(cfg)?,
    )?;
    Ok(())
}

fn sample_logistic(
    cfg: &ExperimentConfig,
    data: sbs_core::models::logistic::LogisticData,
    scfg: &SamplerConfig,
) -> Result<()> {
    let base = match cfg.approx_kind {
        ApproxKind::Vb => fit_vb_logistic(&data.x, &data.y, cfg.prior_var)?,
        ApproxKind::Ml => fit_ml_logistic(&data.x, &data.y)?,
        ApproxKind::VbSym => {
            return Err(SbsError::InvalidConfig(
                "vb-sym applies to the latent class model, not logistic".into(),
            ))
        }
    };
    let start = match cfg.perturbation {
        Some(p) => base.perturb(p.to_perturbation())?,
        None => base.clone(),
    };
    let label = ModelKind::Logistic.to_string();
    match scfg.path_variant {
        PathVariant::Sbs => {
            let target = LogisticTarget::new(data, cfg.prior_var, start, &base)?;
            let out = run_sbs(&target, scfg)?;
            finish(cfg, &label, scfg, &target, &out)
        }
        PathVariant::Cbs => {
            let target = LogisticTarget::from_prior(data, cfg.prior_var, &base)?;
            let out = run_sbs(&target, scfg)?;
            finish(cfg, &label, scfg, &target, &out)
        }
        PathVariant::CbsIs => {
            let path_target = LogisticTarget::from_prior(data.clone(), cfg.prior_var, &base)?;
            let init_target = LogisticTarget::new(data, cfg.prior_var, start, &base)?;
            let out = run_sbs_with_init(&path_target, Some(&init_target), scfg)?;
            finish(cfg, &label, scfg, &path_target, &out)
        }
    }
}

/// Initial cloud drawn from the symmetrized fit while the path starts at
/// the prior. The density must be the labeling-marginal mixture, and the
/// stored relabeling resets to the identity because the prior-path state
/// never uses it.
struct SymVbInit {
    sym: sbs_core::approx::SymmetrizedApprox,
}

impl InitOverride<LcaState> for SymVbInit {
    fn sample_init(&self, rng: &mut SubRng) -> LcaState {
        let mut state = self.sym.sample(rng);
        state.sigma = (0..self.sym.g()).collect();
        state
    }

    fn log_init_density(&self, state: &LcaState) -> f64 {
        self.sym.log_density(state)
    }
}

fn sample_lca(cfg: &ExperimentConfig, data: LcaData, scfg: &SamplerConfig) -> Result<()> {
    let label = format!("{}-g{}", ModelKind::Lca, cfg.g);
    let fit_start = |seed| -> Result<LcaStart> {
        let fit = fit_vb_lca(&data, cfg.g, &cfg.lca_hyper, seed)?;
        match cfg.approx_kind {
            ApproxKind::Vb => Ok(LcaStart::Vb(fit)),
            ApproxKind::VbSym => Ok(LcaStart::SymVb(symmetrize(fit)?)),
            ApproxKind::Ml => Err(SbsError::InvalidConfig(
                "ml applies to the logistic model, not lca".into(),
            )),
        }
    };
    match scfg.path_variant {
        PathVariant::Sbs => {
            let target = LcaTarget::new(data.clone(), cfg.lca_hyper, cfg.g, fit_start(cfg.seed)?)?;
            let out = run_sbs(&target, scfg)?;
            finish(cfg, &label, scfg, &target, &out)
        }
        PathVariant::Cbs => {
            let target = LcaTarget::new(data.clone(), cfg.lca_hyper, cfg.g, LcaStart::Prior)?;
            let out = run_sbs(&target, scfg)?;
            finish(cfg, &label, scfg, &target, &out)
        }
        PathVariant::CbsIs => {
            let path_target =
                LcaTarget::new(data.clone(), cfg.lca_hyper, cfg.g, LcaStart::Prior)?;
            let out = match fit_start(cfg.seed)? {
                LcaStart::Vb(fit) => {
                    let init =
                        LcaTarget::new(data.clone(), cfg.lca_hyper, cfg.g, LcaStart::Vb(fit))?;
                    run_sbs_with_init(&path_target, Some(&init), scfg)?
                }
                LcaStart::SymVb(sym) => {
                    let init = SymVbInit { sym };
                    run_sbs_with_init(&path_target, Some(&init), scfg)?
                }
                LcaStart::Prior => unreachable!("fit_start never returns the prior"),
            };
            finish(cfg, &label, scfg, &path_target, &out)
        }
    }
}

fn sample_sbm(cfg: &ExperimentConfig, data: EdgeData, scfg: &SamplerConfig) -> Result<()> {
    let label = format!("{}-g{}", ModelKind::Sbmreg, cfg.g);
    match scfg.path_variant {
        PathVariant::Sbs => {
            let fit = fit_vb_sbmreg(&data, cfg.g, &cfg.sbm_hyper)?;
            let target = SbmRegTarget::new(data, cfg.sbm_hyper, cfg.g, SbmRegStart::Vb(fit))?;
            let out = run_sbs(&target, scfg)?;
            finish(cfg, &label, scfg, &target, &out)
        }
        PathVariant::Cbs => {
            let target = SbmRegTarget::new(data, cfg.sbm_hyper, cfg.g, SbmRegStart::Prior)?;
            let out = run_sbs(&target, scfg)?;
            finish(cfg, &label, scfg, &target, &out)
        }
        PathVariant::CbsIs => {
            let fit = fit_vb_sbmreg(&data, cfg.g, &cfg.sbm_hyper)?;
            let path_target =
                SbmRegTarget::new(data.clone(), cfg.sbm_hyper, cfg.g, SbmRegStart::Prior)?;
            let init = SbmRegTarget::new(data, cfg.sbm_hyper, cfg.g, SbmRegStart::Vb(fit))?;
            let out = run_sbs_with_init(&path_target, Some(&init), scfg)?;
            finish(cfg, &label, scfg, &path_target, &out)
        }
    }
}
