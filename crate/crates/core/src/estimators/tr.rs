use crate::data::{Dataset, FoldAssignment};
use crate::error::{Error, Result};
use crate::nuisance::CrossFittedNuisances;
use crate::orthogonal::{coefficients, OrthoCoefficients};
use crate::report::{EstimateReport, Method};

/// Transformed regression: per-fold no-intercept slope of `Ĥ` on `Ĉ`,
/// averaged with weights `|I_k| / n`, and the sandwich variance
/// `[n⁻¹Σ(Ĥ − τ̂Ĉ)²Ĉ²] / [n⁻¹ΣĈ²]²`.
pub fn tr_estimate(data: &Dataset, nuis: &CrossFittedNuisances, folds: &FoldAssignment) -> Result<EstimateReport> {
    let coef = coefficients(data, nuis)?;
    tr_from_coefficients(&coef, folds, Method::Tr).map(|r| r.diagnostic("delta_clipped", nuis.delta_clipped as f64))
}

pub fn tr_from_coefficients(coef: &OrthoCoefficients<f64>, folds: &FoldAssignment, method: Method) -> Result<EstimateReport> {
    let n = coef.len();
    if folds.n() != n {
        return Err(Error::Shape { expected: n, got: folds.n() });
    }
    let k = folds.k();
    let mut hc = vec![0.0; k];
    let mut cc = vec![0.0; k];
    let mut size = vec![0usize; k];
    for i in 0..n {
        let f = folds.fold(i);
        hc[f] += coef.h[i] * coef.c[i];
        cc[f] += coef.c[i] * coef.c[i];
        size[f] += 1;
    }
    let mut tau = 0.0;
    for f in 0..k {
        if size[f] == 0 {
            continue;
        }
        if !(cc[f] > 0.0) {
            return Err(Error::Degenerate(format!("ΣĈ² = 0 in fold {f}")));
        }
        tau += size[f] as f64 / n as f64 * (hc[f] / cc[f]);
    }
    let nf = n as f64;
    let num = (0..n).map(|i| ((coef.h[i] - tau * coef.c[i]) * coef.c[i]).powi(2)).sum::<f64>() / nf;
    let den = cc.iter().sum::<f64>() / nf;
    let var = num / (den * den);
    Ok(EstimateReport::new(method, tau, (var / nf).sqrt(), n).diagnostic("k_folds", k as f64))
}
