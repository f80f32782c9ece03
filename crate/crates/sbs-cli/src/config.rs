//! Experiment configuration: JSON file plus command-line overrides.

use sbs_core::approx::Perturbation;
use sbs_core::engine::SamplerConfig;
use sbs_core::models::lca::LcaHyper;
use sbs_core::models::sbmreg::SbmRegHyper;
use sbs_core::{Result, SbsError};
use serde::{Deserialize, Serialize};
use std::path::PathBuf;

/// Model families the runner knows about.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Logistic,
    Lca,
    Sbmreg,
}

impl std::str::FromStr for ModelKind {
    type Err = SbsError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "logistic" => Ok(ModelKind::Logistic),
            "lca" => Ok(ModelKind::Lca),
            "sbmreg" | "sbm" => Ok(ModelKind::Sbmreg),
            other => Err(SbsError::InvalidConfig(format!(
                "unknown model '{other}' (expected logistic, lca or sbmreg)"
            ))),
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            ModelKind::Logistic => "logistic",
            ModelKind::Lca => "lca",
            ModelKind::Sbmreg => "sbmreg",
        };
        f.write_str(s)
    }
}

/// How to build the starting approximation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ApproxKind {
    /// Variational fit (every model supports this).
    #[default]
    Vb,
    /// Label-symmetrized variational fit (latent class model).
    VbSym,
    /// Gaussian at the maximum likelihood estimate (logistic model).
    Ml,
}

impl std::str::FromStr for ApproxKind {
    type Err = SbsError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "vb" => Ok(ApproxKind::Vb),
            "vb-sym" | "vb.sym" => Ok(ApproxKind::VbSym),
            "ml" => Ok(ApproxKind::Ml),
            other => Err(SbsError::InvalidConfig(format!(
                "unknown approximation kind '{other}' (expected vb, vb-sym or ml)"
            ))),
        }
    }
}

/// Optional distortion of a Gaussian approximation, as written in
/// configs and on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum PerturbSpec {
    DiagShrink { factor: f64 },
    DiagInflate { factor: f64 },
    Shift { offset: f64, factor: f64 },
}

impl PerturbSpec {
    pub fn to_perturbation(self) -> Perturbation {
        match self {
            PerturbSpec::DiagShrink { factor } => Perturbation::DiagShrink { factor },
            PerturbSpec::DiagInflate { factor } => Perturbation::DiagInflate { factor },
            PerturbSpec::Shift { offset, factor } => Perturbation::Shift { offset, factor },
        }
    }
}

impl std::str::FromStr for PerturbSpec {
    type Err = SbsError;

    /// Accepts `diag_shrink:F`, `diag_inflate:F` and `shift:OFFSET:F`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let num = |raw: &str| -> Result<f64> {
            raw.parse().map_err(|_| {
                SbsError::InvalidConfig(format!("'{raw}' is not a number in '{s}'"))
            })
        };
        match parts.as_slice() {
            ["diag_shrink", f] => Ok(PerturbSpec::DiagShrink { factor: num(f)? }),
            ["diag_inflate", f] => Ok(PerturbSpec::DiagInflate { factor: num(f)? }),
            ["shift", o, f] => Ok(PerturbSpec::Shift {
                offset: num(o)?,
                factor: num(f)?,
            }),
            _ => Err(SbsError::InvalidConfig(format!(
                "unknown perturbation '{s}' (expected diag_shrink:F, diag_inflate:F or \
                 shift:OFFSET:F)"
            ))),
        }
    }
}

/// Settings of the calibration subcommand.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct CalibrationSection {
    /// Replicates; each study has its own default when unset.
    pub replicates: Option<usize>,
    /// Observations (or nodes) per simulated replicate; per-study default
    /// when unset.
    pub n: Option<usize>,
    /// Items per observation in the latent-class study.
    pub q: usize,
    /// Draws used when no closed-form U exists.
    pub mc_draws: usize,
    /// Credibility level of the coverage study.
    pub level: f64,
    /// Covariates per dyad in the coverage study.
    pub p: usize,
    /// True group counts sampled in the coverage study.
    pub true_groups: Vec<usize>,
    /// Group counts averaged over in the coverage study.
    pub fit_groups: Vec<usize>,
    /// Mixture draws for the variational quantiles in the coverage study.
    pub mixture_draws: usize,
}

impl Default for CalibrationSection {
    fn default() -> Self {
        CalibrationSection {
            replicates: None,
            n: None,
            q: 10,
            mc_draws: 4096,
            level: 0.95,
            p: 3,
            true_groups: vec![1, 2],
            fit_groups: vec![1, 2, 3],
            mixture_draws: 4000,
        }
    }
}

/// Full experiment description. All fields have defaults, so a config
/// file only needs the ones it changes; command-line flags override the
/// file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: Option<ModelKind>,
    pub data_path: Option<PathBuf>,
    pub approx_kind: ApproxKind,
    pub perturbation: Option<PerturbSpec>,
    pub sampler: SamplerConfig,
    /// Group or class count for single-model commands.
    pub g: usize,
    /// Inclusive range of group counts for model selection.
    pub g_range: (usize, usize),
    pub seed: u64,
    pub output_dir: PathBuf,
    /// Isotropic prior variance of the logistic coefficients.
    pub prior_var: f64,
    pub lca_hyper: LcaHyper,
    pub sbm_hyper: SbmRegHyper,
    pub calibration: CalibrationSection,
    /// Zero wall-clock fields in reports so rerun artifacts are
    /// byte-identical.
    pub no_timing: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            model: None,
            data_path: None,
            approx_kind: ApproxKind::Vb,
            perturbation: None,
            sampler: SamplerConfig::default(),
            g: 2,
            g_range: (1, 3),
            seed: 0,
            output_dir: PathBuf::from("out"),
            prior_var: 1.0,
            lca_hyper: LcaHyper::default(),
            sbm_hyper: SbmRegHyper::default(),
            calibration: CalibrationSection::default(),
            no_timing: false,
        }
    }
}

impl ExperimentConfig {
    pub fn from_file(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            SbsError::InvalidData(format!("cannot read config {}: {e}", path.display()))
        })?;
        serde_json::from_str(&text).map_err(|e| {
            SbsError::InvalidConfig(format!("config {}: {e}", path.display()))
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.sampler.validate()?;
        if self.g == 0 {
            return Err(SbsError::InvalidConfig("g must be at least 1".into()));
        }
        let (lo, hi) = self.g_range;
        if lo == 0 || hi < lo || hi > 6 {
            return Err(SbsError::InvalidConfig(format!(
                "g_range ({lo}, {hi}) must satisfy 1 <= lo <= hi <= 6"
            )));
        }
        if self.prior_var <= 0.0 {
            return Err(SbsError::InvalidConfig(
                "prior_var must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn require_model(&self) -> Result<ModelKind> {
        self.model.ok_or_else(|| {
            SbsError::InvalidConfig("no model given (use --model or the config file)".into())
        })
    }

    pub fn require_data_path(&self) -> Result<&std::path::Path> {
        self.data_path.as_deref().ok_or_else(|| {
            SbsError::InvalidConfig("no dataset given (use --data or the config file)".into())
        })
    }
}
