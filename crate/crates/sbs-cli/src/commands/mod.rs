//! Subcommand implementations.

mod calibrate;
mod fit_approx;
mod model_select;
mod sample;

pub use calibrate::{run_calibrate, CalibrateOpts, StudyKind};
pub use fit_approx::run_fit_approx;
pub use model_select::run_model_select;
pub use sample::run_sample;

use crate::config::{ApproxKind, ExperimentConfig, ModelKind};
use sbs_core::approx::{
    fit_ml_logistic, fit_vb_lca, fit_vb_logistic, fit_vb_sbmreg, symmetrize, GaussianApprox,
    LcaVbApprox, SbmRegVbApprox, SymmetrizedApprox,
};
use sbs_core::data::{read_csv_file, read_dyads_csv, read_lca_csv, read_logistic_csv};
use sbs_core::models::lca::LcaData;
use sbs_core::models::logistic::LogisticData;
use sbs_core::models::sbmreg::EdgeData;
use sbs_core::{Result, SbsError};
use std::path::{Path, PathBuf};

/// Dataset in the shape the chosen model expects.
pub enum LoadedData {
    Logistic(LogisticData),
    Lca(LcaData),
    Sbm(EdgeData),
}

pub fn load_data(model: ModelKind, path: &Path) -> Result<LoadedData> {
    match model {
        ModelKind::Logistic => Ok(LoadedData::Logistic(read_csv_file(path, |f| {
            read_logistic_csv(f)
        })?)),
        ModelKind::Lca => Ok(LoadedData::Lca(read_csv_file(path, |f| read_lca_csv(f))?)),
        ModelKind::Sbmreg => Ok(LoadedData::Sbm(read_csv_file(path, |f| {
            read_dyads_csv(f)
        })?)),
    }
}

/// A fitted starting approximation of any supported family.
pub enum BuiltApprox {
    Gaussian(GaussianApprox),
    Lca(LcaVbApprox),
    LcaSym(SymmetrizedApprox),
    Sbm(SbmRegVbApprox),
}

impl BuiltApprox {
    pub fn kind_label(&self) -> &'static str {
        match self {
            BuiltApprox::Gaussian(_) => "gaussian",
            BuiltApprox::Lca(_) => "lca-vb",
            BuiltApprox::LcaSym(_) => "lca-vb-sym",
            BuiltApprox::Sbm(_) => "sbmreg-vb",
        }
    }

    pub fn to_json_value(&self) -> Result<serde_json::Value> {
        let v = match self {
            BuiltApprox::Gaussian(a) => serde_json::to_value(a)?,
            BuiltApprox::Lca(a) => serde_json::to_value(a)?,
            BuiltApprox::LcaSym(a) => serde_json::to_value(a)?,
            BuiltApprox::Sbm(a) => serde_json::to_value(a)?,
        };
        Ok(v)
    }
}

/// Fits the approximation selected by the config for the loaded data.
///
/// For the logistic model the optional perturbation is applied on top
/// of the fitted Gaussian; other models reject perturbations.
pub fn build_approx(cfg: &ExperimentConfig, data: &LoadedData) -> Result<BuiltApprox> {
    if cfg.perturbation.is_some() && !matches!(data, LoadedData::Logistic(_)) {
        return Err(SbsError::InvalidConfig(
            "perturbations only apply to Gaussian approximations of the logistic model".into(),
        ));
    }
    match data {
        LoadedData::Logistic(d) => {
            let base = match cfg.approx_kind {
                ApproxKind::Vb => fit_vb_logistic(&d.x, &d.y, cfg.prior_var)?,
                ApproxKind::Ml => fit_ml_logistic(&d.x, &d.y)?,
                ApproxKind::VbSym => {
                    return Err(SbsError::InvalidConfig(
                        "vb-sym applies to the latent class model, not logistic".into(),
                    ))
                }
            };
            let approx = match cfg.perturbation {
                Some(p) => base.perturb(p.to_perturbation())?,
                None => base,
            };
            Ok(BuiltApprox::Gaussian(approx))
        }
        LoadedData::Lca(d) => {
            let fit = fit_vb_lca(d, cfg.g, &cfg.lca_hyper, cfg.seed)?;
            match cfg.approx_kind {
                ApproxKind::Vb => Ok(BuiltApprox::Lca(fit)),
                ApproxKind::VbSym => Ok(BuiltApprox::LcaSym(symmetrize(fit)?)),
                ApproxKind::Ml => Err(SbsError::InvalidConfig(
                    "ml applies to the logistic model, not lca".into(),
                )),
            }
        }
        LoadedData::Sbm(d) => match cfg.approx_kind {
            ApproxKind::Vb => Ok(BuiltApprox::Sbm(fit_vb_sbmreg(d, cfg.g, &cfg.sbm_hyper)?)),
            _ => Err(SbsError::InvalidConfig(
                "the blockmodel only supports the vb approximation".into(),
            )),
        },
    }
}

/// Creates the output directory if needed and returns a path inside it.
pub fn artifact_path(cfg: &ExperimentConfig, name: &str) -> Result<PathBuf> {
    std::fs::create_dir_all(&cfg.output_dir)?;
    Ok(cfg.output_dir.join(name))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text)?;
    log::info!("wrote {}", path.display());
    Ok(())
}
