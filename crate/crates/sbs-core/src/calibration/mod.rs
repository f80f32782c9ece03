//! Simulation-based calibration, model averaging, and coverage studies.

mod bma;
mod checking;
mod coverage;
mod kstest;
mod lca_cal;
mod ustat;

pub use bma::{bma_moments, ci_coverage, model_posterior, BmaMoments, BmaSummary};
pub use checking::{run_checking_procedure, CalibrationReport, ReplicateFailure};
pub use coverage::{run_sbmreg_coverage, CoverageReport, SbmCoverageConfig};
pub use kstest::{chi2_gof_pvalue, ks_two_sample, ks_uniform_test};
pub use lca_cal::{lca_phi_names, run_lca_calibration, LcaCalConfig, LcaCalMethod};
pub use ustat::u_statistic;
