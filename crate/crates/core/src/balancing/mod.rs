//! Minimax balancing weights and the augmented estimator built on them.

mod admm;
mod qp;

pub use admm::{solve_qp, BalancingWeights};
pub use qp::{build_qp, kkt_residual, QpProblem, N_EPI, N_EQ};

use std::io::Write;
use std::path::Path;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::estimators::g_hat;
use crate::linalg::mean_sd;
use crate::nuisance::CrossFittedNuisances;
use crate::orthogonal::OrthoCoefficients;
use crate::report::{EstimateReport, Method};

/// Smallest variance returned by [`estimate_sigma2`].
pub const SIGMA2_FLOOR: f64 = 1e-6;

/// Mean squared cross-fitted residual `n⁻¹ Σ (Y_i − ĝ_i)²`, floored, unless
/// an override is supplied.
pub fn estimate_sigma2(y: &[f64], g_hat: &[f64], override_value: Option<f64>) -> Result<f64> {
    if let Some(v) = override_value {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::Usage(format!("sigma2_override must be positive, got {v}")));
        }
        return Ok(v);
    }
    if y.len() != g_hat.len() {
        return Err(Error::Shape { expected: y.len(), got: g_hat.len() });
    }
    if y.is_empty() {
        return Err(Error::InsufficientData("no residuals".into()));
    }
    let mse = y.iter().zip(g_hat).map(|(y, g)| (y - g).powi(2)).sum::<f64>() / y.len() as f64;
    Ok(mse.max(SIGMA2_FLOOR))
}

/// `n⁻¹Σ τ̂(X_i) − n⁻¹Σ u_i(ĝ_i − Y_i)` with `u_i = n γ_i`.
///
/// The standard error is the sample deviation of the summands
/// `τ̂(X_i) − u_i(ĝ_i − Y_i)` divided by `√n`.
pub fn amle_estimate(
    data: &Dataset,
    nuis: &CrossFittedNuisances,
    coef: &OrthoCoefficients<f64>,
    tau_hat: &[f64],
    weights: &BalancingWeights,
) -> Result<EstimateReport> {
    let n = data.n();
    if weights.gamma.len() != n {
        return Err(Error::Shape { expected: n, got: weights.gamma.len() });
    }
    let g = g_hat(nuis, coef, tau_hat)?;
    let nf = n as f64;
    let psi: Vec<f64> = (0..n)
        .map(|i| tau_hat[i] - nf * weights.gamma[i] * (g[i] - data.y()[i]))
        .collect();
    let (mean, sd) = mean_sd(&psi);
    Ok(EstimateReport::new(Method::Amle, mean, sd / nf.sqrt(), n)
        .diagnostic("qp_objective", weights.objective)
        .diagnostic("kkt_residual", weights.kkt_residual)
        .diagnostic("solver_iterations", weights.solver_iterations as f64))
}

/// Writes weights as CSV with columns `index,gamma`.
pub fn write_weights_csv<W: Write>(weights: &BalancingWeights, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let io = |e: csv::Error| Error::Validation(format!("cannot write weights: {e}"));
    w.write_record(["index", "gamma"]).map_err(io)?;
    for (i, g) in weights.gamma.iter().enumerate() {
        w.write_record([i.to_string(), format!("{g:e}")]).map_err(io)?;
    }
    w.flush().map_err(|e| Error::Io { path: "<weights>".into(), source: e })
}

pub fn save_weights_csv(weights: &BalancingWeights, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::Io { path: path.display().to_string(), source: e })?;
    write_weights_csv(weights, file)
}
