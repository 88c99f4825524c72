//! Residual-on-residual fits of marginal effects.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::penalized_ls_cv;
use crate::nuisance::ridge::CV_FOLDS;

/// Effect function `x ↦ theta0 + θᵀφ(x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectModel {
    pub theta0: f64,
    pub theta: Vec<f64>,
    pub lambda: f64,
}

impl EffectModel {
    pub fn predict(&self, features: &DMatrix<f64>) -> Result<Vec<f64>> {
        if features.ncols() != self.theta.len() {
            return Err(Error::Shape { expected: self.theta.len(), got: features.ncols() });
        }
        let th = DVector::from_column_slice(&self.theta);
        Ok((features * th).iter().map(|v| v + self.theta0).collect())
    }
}

/// Minimizes `Σ_i (r_i − w_i (θ0 + θᵀφ_i))² + λ‖θ‖²` with `λ` by
/// cross-validation, where `r` is a residualized response and `w` the
/// per-row multiplier of the effect. Columns of `φ` from `core` on are kept
/// only if cross-validation prefers them.
pub fn fit_weighted_effect(
    features: &DMatrix<f64>,
    response: &[f64],
    weight: &[f64],
    lambdas: &[f64],
    core: usize,
) -> Result<EffectModel> {
    let n = features.nrows();
    for len in [response.len(), weight.len()] {
        if len != n {
            return Err(Error::Shape { expected: n, got: len });
        }
    }
    let scale = weight.iter().map(|w| w * w).sum::<f64>();
    if !(scale > 1e-12 * n as f64) {
        return Err(Error::IllPosed("effect multipliers are all close to zero".into()));
    }
    let p = features.ncols();
    let x = DMatrix::from_fn(n, p + 1, |i, j| if j == 0 { weight[i] } else { weight[i] * features[(i, j - 1)] });
    let fit = penalized_ls_cv(&x, &DVector::from_column_slice(response), 1, lambdas, CV_FOLDS, Some(core + 1))?;
    Ok(EffectModel {
        theta0: fit.coef[0],
        theta: fit.coef.iter().skip(1).copied().collect(),
        lambda: fit.lambda,
    })
}

/// Marginal effect of a binary indicator `D` given outcome and indicator
/// predictions on the same rows: regresses `Y − m̂` on `(D − π̂)·[1, φ]`.
pub fn fit_marginal_effect(
    features: &DMatrix<f64>,
    y: &[f64],
    indicator: &[bool],
    m_hat: &[f64],
    pi_hat: &[f64],
    lambdas: &[f64],
    core: usize,
) -> Result<EffectModel> {
    let n = features.nrows();
    for len in [y.len(), indicator.len(), m_hat.len(), pi_hat.len()] {
        if len != n {
            return Err(Error::Shape { expected: n, got: len });
        }
    }
    if indicator.iter().all(|&d| d) || indicator.iter().all(|&d| !d) {
        return Err(Error::IllPosed("indicator takes a single value".into()));
    }
    let r: Vec<f64> = y.iter().zip(m_hat).map(|(y, m)| y - m).collect();
    let w: Vec<f64> = indicator.iter().zip(pi_hat).map(|(&d, p)| d as u8 as f64 - p).collect();
    fit_weighted_effect(features, &r, &w, lambdas, core)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_constant_effect_exactly() {
        let n = 60;
        let f = DMatrix::from_fn(n, 2, |i, j| ((i * (j + 2)) % 9) as f64 / 4.0 - 1.0);
        let d: Vec<bool> = (0..n).map(|i| i % 3 == 0).collect();
        let pi = vec![1.0 / 3.0; n];
        let m = vec![0.7; n];
        let y: Vec<f64> = (0..n).map(|i| 0.7 + 2.0 * (d[i] as u8 as f64 - pi[i])).collect();
        let e = fit_marginal_effect(&f, &y, &d, &m, &pi, &[0.1, 1.0], 2).unwrap();
        assert!((e.theta0 - 2.0).abs() < 1e-10);
        assert!(e.theta.iter().all(|t| t.abs() < 1e-10));
    }

    #[test]
    fn zero_multipliers_are_ill_posed() {
        let f = DMatrix::zeros(10, 1);
        assert!(matches!(
            fit_weighted_effect(&f, &[1.0; 10], &[0.0; 10], &[1.0], 1),
            Err(Error::IllPosed(_))
        ));
    }
}
