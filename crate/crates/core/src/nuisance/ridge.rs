use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{penalized_ls_cv, with_intercept};

/// Folds used for the internal choice of the ridge penalty.
pub const CV_FOLDS: usize = 5;

/// Linear predictor `intercept + featuresᵀ coefficients`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RidgeModel {
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    pub lambda: f64,
}

impl RidgeModel {
    pub fn predict(&self, features: &DMatrix<f64>) -> Result<Vec<f64>> {
        if features.ncols() != self.coefficients.len() {
            return Err(Error::Shape { expected: self.coefficients.len(), got: features.ncols() });
        }
        let beta = DVector::from_column_slice(&self.coefficients);
        Ok((features * beta).iter().map(|v| v + self.intercept).collect())
    }
}

/// Ridge regression with an unpenalized intercept; the penalty is chosen
/// from `lambdas` by 5-fold cross-validation. Feature columns from `core`
/// on are kept only if cross-validation prefers them.
pub fn fit_ridge(features: &DMatrix<f64>, y: &[f64], lambdas: &[f64], core: usize) -> Result<RidgeModel> {
    let n = features.nrows();
    if y.len() != n {
        return Err(Error::Shape { expected: n, got: y.len() });
    }
    if n < 2 {
        return Err(Error::InsufficientData(format!("ridge needs at least 2 rows, got {n}")));
    }
    let x = with_intercept(features);
    let fit = penalized_ls_cv(&x, &DVector::from_column_slice(y), 1, lambdas, CV_FOLDS, Some(core + 1))?;
    Ok(RidgeModel {
        intercept: fit.coef[0],
        coefficients: fit.coef.iter().skip(1).copied().collect(),
        lambda: fit.lambda,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_response_shrinks_to_mean() {
        let f = DMatrix::from_fn(40, 3, |i, j| ((i * 5 + j) % 7) as f64 - 3.0);
        let m = fit_ridge(&f, &[2.5; 40], &[1e6], 3).unwrap();
        assert!((m.intercept - 2.5).abs() < 1e-9);
        assert!(m.coefficients.iter().all(|c| c.abs() < 1e-9));
    }

    #[test]
    fn interpolates_without_penalty() {
        let x: Vec<f64> = (0..20).map(|i| (i as f64 * 0.3).cos()).collect();
        let f = DMatrix::from_column_slice(20, 1, &x);
        let m = fit_ridge(&f, &x, &[0.0], 1).unwrap();
        assert!((m.coefficients[0] - 1.0).abs() < 1e-8);
        assert!(m.intercept.abs() < 1e-8);
        let p = m.predict(&f).unwrap();
        assert!(p.iter().zip(&x).all(|(a, b)| (a - b).abs() < 1e-8));
    }

    #[test]
    fn too_few_rows() {
        let f = DMatrix::from_element(1, 1, 1.0);
        assert!(matches!(fit_ridge(&f, &[1.0], &[1.0], 1), Err(Error::InsufficientData(_))));
    }
}
