use serde::{Deserialize, Serialize};

use crate::basis::default_max_order;
use crate::error::{Error, Result};

/// Tuning parameters shared by the nuisance learners and the estimators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimationConfig {
    /// Cross-fitting folds.
    pub k_folds: usize,
    /// Hermite degree for the outcome and effect learners; `None` picks by `d`.
    pub basis_max_order: Option<usize>,
    /// Hermite degree for the cell-probability model.
    pub propensity_max_order: Option<usize>,
    /// Hermite degree of the balancing class; `None` follows `basis_max_order`.
    pub amle_basis_max_order: Option<usize>,
    /// Extra univariate Hermite terms up to this degree for the outcome,
    /// effect and balancing learners (0 disables them). Each fit keeps them
    /// only when cross-validation prefers them.
    pub additive_max_order: usize,
    /// The same for the cell-probability model.
    pub propensity_additive_max_order: usize,
    pub ridge_lambdas: Vec<f64>,
    /// Ridge penalty of the multinomial cell-probability fit.
    pub propensity_penalty: f64,
    pub eta_clip: f64,
    pub f_min: f64,
    pub seed: u64,
    pub qp_tol: f64,
    pub qp_max_iter: usize,
    pub sigma2_override: Option<f64>,
}

impl Default for EstimationConfig {
    fn default() -> Self {
        EstimationConfig {
            k_folds: 5,
            basis_max_order: None,
            propensity_max_order: None,
            amle_basis_max_order: None,
            additive_max_order: 17,
            propensity_additive_max_order: 0,
            ridge_lambdas: vec![1e-3, 1e-2, 0.1, 1.0, 10.0, 100.0, 1000.0],
            propensity_penalty: 1.0,
            eta_clip: 0.01,
            f_min: 0.05,
            seed: 0,
            qp_tol: 1e-8,
            qp_max_iter: 50_000,
            sigma2_override: None,
        }
    }
}

impl EstimationConfig {
    pub fn outcome_order(&self, d: usize) -> usize {
        self.basis_max_order.unwrap_or_else(|| default_max_order(d))
    }

    pub fn propensity_order(&self, d: usize) -> usize {
        self.propensity_max_order.unwrap_or_else(|| self.outcome_order(d).min(2))
    }

    pub fn amle_order(&self, d: usize) -> usize {
        self.amle_basis_max_order.unwrap_or_else(|| self.outcome_order(d))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Usage(msg));
        if self.k_folds < 2 {
            return bad(format!("k_folds must be at least 2, got {}", self.k_folds));
        }
        if self.ridge_lambdas.is_empty() || self.ridge_lambdas.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
            return bad("ridge_lambdas must be a nonempty list of nonnegative reals".into());
        }
        if !(self.eta_clip > 0.0 && self.eta_clip < 0.25) {
            return bad(format!("eta_clip must lie in (0, 0.25), got {}", self.eta_clip));
        }
        if !(self.f_min > 0.0 && self.f_min < 1.0) {
            return bad(format!("f_min must lie in (0, 1), got {}", self.f_min));
        }
        if !(self.qp_tol > 0.0) || self.qp_max_iter == 0 {
            return bad("qp_tol must be positive and qp_max_iter nonzero".into());
        }
        if !(self.propensity_penalty > 0.0) {
            return bad("propensity_penalty must be positive".into());
        }
        if let Some(s2) = self.sigma2_override {
            if !(s2 > 0.0 && s2.is_finite()) {
                return bad(format!("sigma2_override must be positive, got {s2}"));
            }
        }
        for (name, order) in [
            ("basis_max_order", self.basis_max_order),
            ("propensity_max_order", self.propensity_max_order),
            ("amle_basis_max_order", self.amle_basis_max_order),
        ] {
            if order == Some(0) {
                return bad(format!("{name} must be at least 1"));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_roundtrip() {
        let c = EstimationConfig::default();
        c.validate().unwrap();
        let json = serde_json::to_string(&c).unwrap();
        let back: EstimationConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back, c);
        assert_eq!(c.outcome_order(6), 3);
        assert_eq!(c.outcome_order(7), 2);
        assert_eq!(c.propensity_order(6), 2);
    }

    #[test]
    fn partial_documents_fill_defaults() {
        let c: EstimationConfig = serde_json::from_str(r#"{"k_folds": 3, "eta_clip": 0.02}"#).unwrap();
        assert_eq!(c.k_folds, 3);
        assert_eq!(c.f_min, 0.05);
        assert!(serde_json::from_str::<EstimationConfig>(r#"{"bogus": 1}"#).is_err());
    }

    #[test]
    fn rejects_bad_values() {
        let c = EstimationConfig { k_folds: 1, ..Default::default() };
        assert!(c.validate().is_err());
        let c = EstimationConfig { sigma2_override: Some(-1.0), ..Default::default() };
        assert!(c.validate().is_err());
    }
}
