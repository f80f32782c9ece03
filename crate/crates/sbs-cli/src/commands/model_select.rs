//! model-select: evidence comparison across group counts for the
//! block model, with model-averaged covariate effects.

use super::{artifact_path, load_data, write_text, LoadedData};
use crate::config::{ExperimentConfig, ModelKind};
use sbs_core::approx::fit_vb_sbmreg;
use sbs_core::calibration::{bma_moments, model_posterior, BmaSummary};
use sbs_core::engine::{run_sbs, BridgeTarget};
use sbs_core::math::{weighted_mean, weighted_variance};
use sbs_core::models::sbmreg::{SbmRegStart, SbmRegTarget};
use sbs_core::report::RunReport;
use sbs_core::rng::derive_seed;
use sbs_core::{Result, SbsError};

pub fn run_model_select(cfg: &ExperimentConfig) -> Result<()> {
    let model = cfg.require_model()?;
    if model != ModelKind::Sbmreg {
        return Err(SbsError::InvalidConfig(
            "model selection is implemented for the block model only".into(),
        ));
    }
    let data = match load_data(model, cfg.require_data_path()?)? {
        LoadedData::Sbm(d) => d,
        _ => unreachable!("sbmreg data loads as a network"),
    };

    let (lo, hi) = cfg.g_range;
    let groups: Vec<usize> = (lo..=hi).collect();
    let mut log_ev_product = Vec::with_capacity(groups.len());
    let mut log_ev_path = Vec::with_capacity(groups.len());
    let mut beta_stats: Vec<(Vec<f64>, Vec<f64>)> = Vec::with_capacity(groups.len());
    let mut beta_names: Vec<String> = Vec::new();

    for &g in &groups {
        let fit = fit_vb_sbmreg(&data, g, &cfg.sbm_hyper)?;
        let target = SbmRegTarget::new(data.clone(), cfg.sbm_hyper, g, SbmRegStart::Vb(fit))?;
        let mut scfg = cfg.sampler.clone();
        scfg.master_seed = derive_seed(cfg.seed, g as u64);
        let out = run_sbs(&target, &scfg)?;

        let label = format!("{model}-g{g}");
        let report = RunReport::new(&label, &scfg, &out);
        let report = if cfg.no_timing {
            report.without_timing()
        } else {
            report
        };
        write_text(
            &artifact_path(cfg, &format!("report_g{g}.json"))?,
            &report.to_json()?,
        )?;
        log::info!(
            "{label}: log evidence {:.4} (product) / {:.4} (path)",
            out.log_evidence_product,
            out.log_evidence_path
        );

        let names = target.param_names();
        let beta_idx: Vec<usize> = names
            .iter()
            .enumerate()
            .filter(|(_, n)| n.starts_with("beta_"))
            .map(|(i, _)| i)
            .collect();
        if beta_names.is_empty() {
            beta_names = beta_idx.iter().map(|&i| names[i].clone()).collect();
        }
        let rows: Vec<Vec<f64>> = out
            .final_cloud
            .particles
            .iter()
            .map(|s| target.flatten(s))
            .collect();
        let w = &out.final_cloud.norm_weights;
        let mut means = Vec::with_capacity(beta_idx.len());
        let mut vars = Vec::with_capacity(beta_idx.len());
        for &i in &beta_idx {
            let col: Vec<f64> = rows.iter().map(|r| r[i]).collect();
            means.push(weighted_mean(&col, w));
            vars.push(weighted_variance(&col, w));
        }
        beta_stats.push((means, vars));
        log_ev_product.push(out.log_evidence_product);
        log_ev_path.push(out.log_evidence_path);
    }

    let log_prior = vec![0.0; groups.len()];
    let posterior = model_posterior(&log_ev_product, &log_prior)?;
    let moments = (0..beta_names.len())
        .map(|j| {
            let per_g_mean: Vec<f64> = beta_stats.iter().map(|(m, _)| m[j]).collect();
            let per_g_var: Vec<f64> = beta_stats.iter().map(|(_, v)| v[j]).collect();
            bma_moments(&per_g_mean, &per_g_var, &posterior)
        })
        .collect::<Result<Vec<_>>>()?;
    let summary = BmaSummary {
        groups: groups.clone(),
        model_posterior: posterior.clone(),
        parameters: beta_names,
        moments,
    };

    let p_one_group = groups
        .iter()
        .position(|&g| g == 1)
        .map(|i| posterior[i]);
    if let Some(p) = p_one_group {
        log::info!("posterior probability of a single group: {p:.4}");
    }
    let artifact = serde_json::json!({
        "version": env!("CARGO_PKG_VERSION"),
        "model": model.to_string(),
        "groups": groups,
        "log_evidence_product": log_ev_product,
        "log_evidence_path": log_ev_path,
        "model_posterior": posterior,
        "p_one_group": p_one_group,
        "bma": summary,
        "config": cfg,
    });
    write_text(
        &artifact_path(cfg, "model_select.json")?,
        &serde_json::to_string_pretty(&artifact)?,
    )?;
    Ok(())
}
