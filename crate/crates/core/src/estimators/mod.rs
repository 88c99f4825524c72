//! Average-effect estimators built on the orthogonal decomposition, plus
//! the regression and cell-mean baselines.

mod aipw;
mod baselines;
mod hte;
mod target;
mod tr;

pub use aipw::{aipw_estimate, g_hat, gamma_hat, ipw_estimate};
pub use baselines::{ols_baseline, sample_means};
pub use hte::{hte_fit, hte_from_coefficients, hte_report, HteFit, HteModel};
pub use target::{c_squared_weight, standard_normals, weighted_target, TruthModel, WeightedTarget};
pub use tr::{tr_estimate, tr_from_coefficients};
