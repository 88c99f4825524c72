use nalgebra::{DMatrix, DVector};

use crate::data::{Cell, Dataset};
use crate::error::{Error, Result};
use crate::report::{EstimateReport, Method};

/// Relative singular-value cutoff below which the OLS design is rank deficient.
const RANK_TOL: f64 = 1e-10;

/// OLS of `Y` on `(1, X, S, T, ST)`; reports the `ST` coefficient with an
/// HC1 heteroskedasticity-robust standard error.
pub fn ols_baseline(data: &Dataset) -> Result<EstimateReport> {
    let (n, d) = (data.n(), data.d());
    let q = d + 4;
    if n <= q {
        return Err(Error::InsufficientData(format!("OLS needs more than {q} rows, got {n}")));
    }
    let x = DMatrix::from_fn(n, q, |i, j| {
        let (s, t) = (data.s()[i] as u8 as f64, data.t()[i] as u8 as f64);
        match j {
            0 => 1.0,
            j if j <= d => data.x()[(i, j - 1)],
            j if j == d + 1 => s,
            j if j == d + 2 => t,
            _ => s * t,
        }
    });
    let y = DVector::from_column_slice(data.y());
    let svd = x.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smin > RANK_TOL * smax) {
        return Err(Error::RankDeficient(format!(
            "OLS design has condition number {:.3e}",
            smax / smin.max(f64::MIN_POSITIVE)
        )));
    }
    let beta = svd.solve(&y, 0.0).map_err(|e| Error::RankDeficient(e.to_string()))?;
    let v = svd.v_t.as_ref().expect("requested").transpose();
    let inv_s2 = DVector::from_iterator(q, svd.singular_values.iter().map(|s| 1.0 / (s * s)));
    let bread = &v * DMatrix::from_diagonal(&inv_s2) * v.transpose();
    let resid = &y - &x * &beta;
    let mut xr = x.clone();
    for (i, mut row) in xr.row_iter_mut().enumerate() {
        row *= resid[i];
    }
    let meat = xr.tr_mul(&xr);
    let cov = &bread * meat * &bread * (n as f64 / (n - q) as f64);
    let j = q - 1;
    Ok(EstimateReport::new(Method::Ols, beta[j], cov[(j, j)].max(0.0).sqrt(), n))
}

/// Double difference of the four cell means with the standard error
/// `√(Σ s²_c / n_c)`.
pub fn sample_means(data: &Dataset) -> Result<EstimateReport> {
    let mut sum = [0.0; 4];
    let mut count = [0usize; 4];
    for i in 0..data.n() {
        let c = data.cell(i).index();
        sum[c] += data.y()[i];
        count[c] += 1;
    }
    if let Some(c) = count.iter().position(|&k| k == 0) {
        return Err(Error::Overlap(format!("no observations in cell {}", Cell::from_index(c))));
    }
    let mean: Vec<f64> = (0..4).map(|c| sum[c] / count[c] as f64).collect();
    let mut ss = [0.0; 4];
    for i in 0..data.n() {
        let c = data.cell(i).index();
        ss[c] += (data.y()[i] - mean[c]).powi(2);
    }
    let mut tau = 0.0;
    let mut var = 0.0;
    for cell in Cell::ALL {
        let c = cell.index();
        tau += cell.sign() * mean[c];
        if count[c] > 1 {
            var += ss[c] / (count[c] - 1) as f64 / count[c] as f64;
        }
    }
    Ok(EstimateReport::new(Method::SampleMeans, tau, var.sqrt(), data.n()))
}
