use nalgebra::DMatrix;

use crate::data::{Dataset, FoldAssignment};
use crate::error::{Error, Result};
use crate::linalg::mean_sd;
use crate::nuisance::{fit_weighted_effect, CrossFittedNuisances, EffectModel};
use crate::orthogonal::{coefficients, OrthoCoefficients};
use crate::report::{EstimateReport, Method};

/// Effect model `x ↦ theta0 + θᵀφ(x)` fit on one fold complement.
pub type HteModel = EffectModel;

#[derive(Debug, Clone)]
pub struct HteFit {
    /// Out-of-fold `τ̂(X_i)`.
    pub tau_hat: Vec<f64>,
    /// One model per fold, fit without that fold.
    pub models: Vec<HteModel>,
}

/// Cross-fitted heterogeneous effect: on each fold complement, minimizes
/// `Σ (Ĥ_j − Ĉ_j(θ0 + θᵀφ(X_j)))² + λ‖θ‖²` with `λ` by cross-validation,
/// then evaluates on the held-out fold. Feature columns from `core` on are
/// kept only if cross-validation prefers them.
pub fn hte_fit(
    data: &Dataset,
    nuis: &CrossFittedNuisances,
    folds: &FoldAssignment,
    features: &DMatrix<f64>,
    lambdas: &[f64],
    core: usize,
) -> Result<HteFit> {
    let coef = coefficients(data, nuis)?;
    hte_from_coefficients(&coef, folds, features, lambdas, core)
}

pub fn hte_from_coefficients(
    coef: &OrthoCoefficients<f64>,
    folds: &FoldAssignment,
    features: &DMatrix<f64>,
    lambdas: &[f64],
    core: usize,
) -> Result<HteFit> {
    let n = coef.len();
    for len in [folds.n(), features.nrows()] {
        if len != n {
            return Err(Error::Shape { expected: n, got: len });
        }
    }
    let mut tau_hat = vec![0.0; n];
    let mut models = Vec::with_capacity(folds.k());
    for f in 0..folds.k() {
        let eval = folds.indices(f);
        // With a single fold the known-nuisance path fits and evaluates on all rows.
        let train = if folds.k() == 1 { eval.clone() } else { folds.complement(f) };
        let x_tr = features.select_rows(train.iter());
        let h_tr: Vec<f64> = train.iter().map(|&i| coef.h[i]).collect();
        let c_tr: Vec<f64> = train.iter().map(|&i| coef.c[i]).collect();
        let model = fit_weighted_effect(&x_tr, &h_tr, &c_tr, lambdas, core)?;
        let pred = model.predict(&features.select_rows(eval.iter()))?;
        for (k, &i) in eval.iter().enumerate() {
            tau_hat[i] = pred[k];
        }
        models.push(model);
    }
    Ok(HteFit { tau_hat, models })
}

/// Average of the cross-fitted effects. The standard error is the naive
/// `sd(τ̂(X))/√n`, which ignores estimation error in `τ̂`.
pub fn hte_report(fit: &HteFit) -> EstimateReport {
    let (mean, sd) = mean_sd(&fit.tau_hat);
    let n = fit.tau_hat.len();
    EstimateReport::new(Method::Hte, mean, sd / (n as f64).sqrt(), n).diagnostic("ci_naive", 1.0)
}
