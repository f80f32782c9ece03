//! Target distributions and their bridge kernels.

pub mod lca;
pub mod logistic;
pub mod sbmreg;
pub mod toy;
