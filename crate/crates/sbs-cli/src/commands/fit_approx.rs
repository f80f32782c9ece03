//! fit-approx: fit the starting approximation and write it as JSON.

use super::{artifact_path, build_approx, load_data, write_text};
use crate::config::ExperimentConfig;
use sbs_core::Result;

pub fn run_fit_approx(cfg: &ExperimentConfig) -> Result<()> {
    let model = cfg.require_model()?;
    let data = load_data(model, cfg.require_data_path()?)?;
    let approx = build_approx(cfg, &data)?;

    let artifact = serde_json::json!({
        "version": env!("CARGO_PKG_VERSION"),
        "model": model.to_string(),
        "kind": approx.kind_label(),
        "approx_kind": cfg.approx_kind,
        "perturbation": cfg.perturbation,
        "g": cfg.g,
        "seed": cfg.seed,
        "approx": approx.to_json_value()?,
    });
    let path = artifact_path(cfg, "approx.json")?;
    write_text(&path, &serde_json::to_string_pretty(&artifact)?)?;
    Ok(())
}
