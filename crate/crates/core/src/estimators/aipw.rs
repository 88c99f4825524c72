use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::linalg::mean_sd;
use crate::nuisance::CrossFittedNuisances;
use crate::orthogonal::OrthoCoefficients;
use crate::report::{EstimateReport, Method};

/// `ĝ(Z_i) = m̂ + Âν̂ + B̂ς̂ + Ĉτ̂` per observation.
pub fn g_hat(nuis: &CrossFittedNuisances, coef: &OrthoCoefficients<f64>, tau_hat: &[f64]) -> Result<Vec<f64>> {
    let n = nuis.len();
    for len in [coef.len(), tau_hat.len()] {
        if len != n {
            return Err(Error::Shape { expected: n, got: len });
        }
    }
    Ok((0..n)
        .map(|i| nuis.m[i] + coef.a[i] * nuis.nu[i] + coef.b[i] * nuis.sigma[i] + coef.c[i] * tau_hat[i])
        .collect())
}

/// Inverse-probability weights `±1/e_{S_i,T_i}(X_i)`, positive for cells
/// `(1,1)` and `(0,0)`.
pub fn gamma_hat(data: &Dataset, nuis: &CrossFittedNuisances) -> Result<Vec<f64>> {
    if nuis.len() != data.n() {
        return Err(Error::Shape { expected: data.n(), got: nuis.len() });
    }
    Ok((0..data.n())
        .map(|i| {
            let cell = data.cell(i);
            cell.sign() / nuis.own_cell(i, cell)
        })
        .collect())
}

/// Doubly robust estimate: mean of `τ̂(X_i) + γ̂_i(Y_i − ĝ_i)` with the
/// standard error `sd/√n` of those summands.
pub fn aipw_estimate(
    data: &Dataset,
    nuis: &CrossFittedNuisances,
    coef: &OrthoCoefficients<f64>,
    tau_hat: &[f64],
) -> Result<EstimateReport> {
    let g = g_hat(nuis, coef, tau_hat)?;
    let gamma = gamma_hat(data, nuis)?;
    let psi: Vec<f64> = (0..data.n()).map(|i| tau_hat[i] + gamma[i] * (data.y()[i] - g[i])).collect();
    let (mean, sd) = mean_sd(&psi);
    let n = data.n();
    let max_w = gamma.iter().fold(0.0f64, |a, g| a.max(g.abs()));
    Ok(EstimateReport::new(Method::Aipw, mean, sd / (n as f64).sqrt(), n).diagnostic("max_abs_weight", max_w))
}

/// Weighting-only estimate `n⁻¹ Σ γ̂_i Y_i`. Its interval is reported but
/// flagged as unreliable.
pub fn ipw_estimate(data: &Dataset, nuis: &CrossFittedNuisances) -> Result<EstimateReport> {
    let gamma = gamma_hat(data, nuis)?;
    let terms: Vec<f64> = gamma.iter().zip(data.y()).map(|(g, y)| g * y).collect();
    let (mean, sd) = mean_sd(&terms);
    let n = data.n();
    Ok(EstimateReport::new(Method::Ipw, mean, sd / (n as f64).sqrt(), n).diagnostic("ci_unreliable", 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn uniform(n: usize) -> (Dataset, CrossFittedNuisances) {
        let x = DMatrix::from_fn(n, 1, |i, _| i as f64);
        let s: Vec<bool> = (0..n).map(|i| i % 4 >= 2).collect();
        let t: Vec<bool> = (0..n).map(|i| i % 2 == 1).collect();
        let data = Dataset::new(x, s, t, vec![0.0; n]).unwrap();
        let nuis = CrossFittedNuisances::from_parts(vec![0.0; n], vec![[0.25; 4]; n], vec![0.0; n], vec![0.0; n], vec![0; n], 0.05)
            .unwrap();
        (data, nuis)
    }

    #[test]
    fn uniform_cells_give_unit_weights_of_four() {
        let (data, nuis) = uniform(8);
        let g = gamma_hat(&data, &nuis).unwrap();
        assert_eq!(&g[..4], &[4.0, -4.0, -4.0, 4.0]);
    }

    #[test]
    fn zero_outcome_gives_zero() {
        let (data, nuis) = uniform(8);
        let r = ipw_estimate(&data, &nuis).unwrap();
        assert_eq!(r.tau_hat, 0.0);
        assert_eq!(r.diagnostics["ci_unreliable"], 1.0);
    }
}
