//! Deterministic posterior approximations used as bridge starting points.

mod gaussian;
pub(crate) mod lca_vb;
mod logistic_vb;
pub(crate) mod sbmreg_vb;

pub use gaussian::{GaussianApprox, Perturbation};
pub use lca_vb::{fit_vb_lca, fit_vb_lca_restarts, symmetrize, LcaVbApprox, SymmetrizedApprox};
pub use logistic_vb::{fit_ml_logistic, fit_vb_logistic};
pub use sbmreg_vb::{fit_vb_sbmreg, SbmRegVbApprox};
