//! Nonparametric difference-in-differences under conditional parallel trends.
//!
//! The crate estimates the effect `τ(x)` of the interaction `S·T` in
//! `Y = b(X) + Sξ(X) + Tρ(X) + STτ(X) + ε` from repeated cross-sections.
//! Estimators:
//!
//! - transformed regression on the orthogonal decomposition ([`estimators::tr_estimate`]),
//! - a cross-fitted heterogeneous effect fit ([`estimators::hte_fit`]),
//! - augmented inverse weighting ([`estimators::aipw_estimate`]) and plain IPW,
//! - augmented minimax balancing ([`balancing::amle_estimate`]),
//! - the sample-means and OLS baselines.
//!
//! [`simulation`] holds the synthetic setups and the Monte Carlo harness;
//! [`pipeline`] runs a list of methods on one dataset.

pub mod balancing;
pub mod basis;
pub mod config;
pub mod data;
pub mod error;
pub mod estimators;
pub mod linalg;
pub mod nuisance;
pub mod orthogonal;
pub mod pipeline;
pub mod report;
pub mod scalar;
pub mod simulation;

pub use config::EstimationConfig;
pub use data::{Cell, Dataset, FoldAssignment};
pub use error::{Error, Result};
pub use report::{EstimateReport, Method};

/// Hermite basis in double precision.
pub type Basis = basis::HermiteBasis<f64>;
/// Orthogonal coefficients in double precision.
pub type Coefficients = orthogonal::OrthoCoefficients<f64>;
/// Exact rational scalar for identity checks.
pub type Exact = num_rational::BigRational;
