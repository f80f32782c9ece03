//! Command-line interface to the bridge sampler: fit starting
//! approximations, draw tempered posterior samples, compare group
//! counts by evidence, and run calibration studies.

mod commands;
mod config;

use clap::{Args, Parser, Subcommand};
use commands::{run_calibrate, run_fit_approx, run_model_select, run_sample, CalibrateOpts};
use config::{ApproxKind, ExperimentConfig, ModelKind, PerturbSpec};
use sbs_core::calibration::LcaCalMethod;
use sbs_core::engine::PathVariant;
use sbs_core::{Result, SbsError};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "sbs",
    version,
    about = "Sequential Monte Carlo bridge from a deterministic posterior \
             approximation to the exact posterior"
)]
struct Cli {
    #[command(flatten)]
    common: CommonOpts,
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by all subcommands; each overrides the config file.
#[derive(Args)]
struct CommonOpts {
    /// JSON experiment config; flags override its values
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Master seed; all randomness in a run derives from it
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores; results do not depend on it)
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Directory receiving all output artifacts
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Zero timing fields in reports so reruns are byte-identical
    #[arg(long, global = true)]
    no_timing: bool,
    /// Model family: logistic, lca or sbmreg
    #[arg(long, global = true, value_parser = clap::builder::ValueParser::new(parse_model))]
    model: Option<ModelKind>,
    /// Dataset CSV
    #[arg(long, global = true, value_name = "FILE")]
    data: Option<PathBuf>,
    /// Group or class count
    #[arg(long, global = true)]
    g: Option<usize>,
    /// Starting approximation: vb, vb-sym or ml
    #[arg(long, global = true, value_parser = clap::builder::ValueParser::new(parse_approx))]
    approx_kind: Option<ApproxKind>,
    /// Damage the fitted Gaussian before starting:
    /// diag_shrink:F, diag_inflate:F or shift:OFFSET:F
    #[arg(long, global = true, value_parser = clap::builder::ValueParser::new(parse_perturb))]
    perturb: Option<PerturbSpec>,
    /// Particle count
    #[arg(long, global = true)]
    particles: Option<usize>,
    /// Conditional ESS fraction targeted by each tempering step
    #[arg(long, global = true)]
    tau1: Option<f64>,
    /// ESS fraction below which the cloud is resampled
    #[arg(long, global = true)]
    tau2: Option<f64>,
    /// Markov kernel sweeps per tempering step
    #[arg(long, global = true)]
    sweeps: Option<usize>,
    /// Tempering path: SBS (from the approximation), CBS (from the
    /// prior) or CBS_IS (prior path, approximation-weighted start)
    #[arg(long, global = true, value_parser = clap::builder::ValueParser::new(parse_path))]
    path: Option<PathVariant>,
    /// Isotropic prior variance of the logistic coefficients
    #[arg(long, global = true)]
    prior_var: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the deterministic starting approximation and write it as JSON
    FitApprox,
    /// Run the bridge sampler; writes sample.csv and report.json
    Sample,
    /// Compare group counts by evidence and model-average the covariate
    /// effects (block model only)
    ModelSelect {
        /// Smallest group count
        #[arg(long)]
        g_min: Option<usize>,
        /// Largest group count
        #[arg(long)]
        g_max: Option<usize>,
    },
    /// Run a simulation-based calibration study
    Calibrate {
        /// Study: lca (quantile uniformity) or sbm-coverage (intervals)
        #[arg(long, default_value = "lca", value_parser = clap::builder::ValueParser::new(parse_study))]
        study: commands::StudyKind,
        /// Representation checked by the lca study: vb, vb-sym, sbs-vb
        /// or sbs-vb-sym
        #[arg(long, default_value = "sbs-vb-sym", value_parser = clap::builder::ValueParser::new(parse_method))]
        method: LcaCalMethod,
        /// Simulated replicates
        #[arg(long)]
        replicates: Option<usize>,
        /// Observations or nodes per replicate
        #[arg(long)]
        cal_n: Option<usize>,
        /// Items per observation (lca study)
        #[arg(long)]
        cal_q: Option<usize>,
    },
}

fn parse_model(s: &str) -> Result<ModelKind> {
    s.parse()
}

fn parse_approx(s: &str) -> Result<ApproxKind> {
    s.parse()
}

fn parse_perturb(s: &str) -> Result<PerturbSpec> {
    s.parse()
}

fn parse_path(s: &str) -> Result<PathVariant> {
    s.parse()
}

fn parse_study(s: &str) -> Result<commands::StudyKind> {
    s.parse()
}

fn parse_method(s: &str) -> Result<LcaCalMethod> {
    s.parse()
}

/// Layered config: file values first, then command-line flags on top.
fn resolve_config(cli: &Cli) -> Result<ExperimentConfig> {
    let common = &cli.common;
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::from_file(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(m) = common.model {
        cfg.model = Some(m);
    }
    if let Some(d) = &common.data {
        cfg.data_path = Some(d.clone());
    }
    if let Some(g) = common.g {
        cfg.g = g;
    }
    if let Some(a) = common.approx_kind {
        cfg.approx_kind = a;
    }
    if let Some(p) = common.perturb {
        cfg.perturbation = Some(p);
    }
    if let Some(m) = common.particles {
        cfg.sampler.particles = m;
    }
    if let Some(t) = common.tau1 {
        cfg.sampler.tau1 = t;
    }
    if let Some(t) = common.tau2 {
        cfg.sampler.tau2 = t;
    }
    if let Some(s) = common.sweeps {
        cfg.sampler.mcmc_sweeps = s;
    }
    if let Some(p) = common.path {
        cfg.sampler.path_variant = p;
    }
    if let Some(v) = common.prior_var {
        cfg.prior_var = v;
    }
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(o) = &common.out {
        cfg.output_dir = o.clone();
    }
    if common.no_timing {
        cfg.no_timing = true;
    }
    match &cli.command {
        Command::ModelSelect { g_min, g_max } => {
            let (lo, hi) = cfg.g_range;
            cfg.g_range = (g_min.unwrap_or(lo), g_max.unwrap_or(hi));
        }
        Command::Calibrate {
            replicates,
            cal_n,
            cal_q,
            ..
        } => {
            if replicates.is_some() {
                cfg.calibration.replicates = *replicates;
            }
            if cal_n.is_some() {
                cfg.calibration.n = *cal_n;
            }
            if let Some(q) = cal_q {
                cfg.calibration.q = *q;
            }
        }
        _ => {}
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<()> {
    let cfg = resolve_config(cli)?;
    match &cli.command {
        Command::FitApprox => run_fit_approx(&cfg),
        Command::Sample => run_sample(&cfg),
        Command::ModelSelect { .. } => run_model_select(&cfg),
        Command::Calibrate { study, method, .. } => {
            let opts = CalibrateOpts {
                study: *study,
                method: *method,
            };
            run_calibrate(&cfg, &opts)
        }
    }
}

/// Exit codes: 2 for bad input or config, 3 for a sampler failure,
/// 4 for a calibration study that could not complete, 1 otherwise.
fn exit_code(err: &SbsError) -> u8 {
    match err {
        SbsError::Io(_)
        | SbsError::Csv(_)
        | SbsError::Json(_)
        | SbsError::InvalidData(_)
        | SbsError::InvalidConfig(_) => 2,
        SbsError::DegenerateCloud
        | SbsError::NonFiniteDensity { .. }
        | SbsError::Stalled(_)
        | SbsError::IncompleteTrace(_) => 3,
        SbsError::Calibration(_) => 4,
        _ => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Some(threads) = cli.common.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
        {
            eprintln!("error: cannot set thread count: {e}");
            return ExitCode::from(2);
        }
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}
