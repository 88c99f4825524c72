//! Penalized least squares through sufficient statistics.
//!
//! All learners here reduce to `min ‖y − Xβ‖² + λ Σ_{j ≥ u} β_j²` with the
//! first `u` columns unpenalized. Cross-validation only needs the Gram
//! statistics `(XᵀX, Xᵀy, yᵀy)` of each validation fold: training statistics
//! are the total minus the fold, and the held-out squared error is a
//! quadratic form in the fitted coefficients.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Gram statistics of a design and response.
#[derive(Debug, Clone)]
pub struct GramStats {
    pub xtx: DMatrix<f64>,
    pub xty: DVector<f64>,
    pub yty: f64,
    pub n: usize,
}

impl GramStats {
    pub fn new(x: &DMatrix<f64>, y: &DVector<f64>) -> Self {
        GramStats {
            xtx: x.tr_mul(x),
            xty: x.tr_mul(y),
            yty: y.dot(y),
            n: x.nrows(),
        }
    }

    pub fn minus(&self, other: &GramStats) -> GramStats {
        GramStats {
            xtx: &self.xtx - &other.xtx,
            xty: &self.xty - &other.xty,
            yty: self.yty - other.yty,
            n: self.n - other.n,
        }
    }

    /// `‖y − Xβ‖²` expanded from the statistics.
    pub fn sse(&self, beta: &DVector<f64>) -> f64 {
        let quad = beta.dot(&(&self.xtx * beta));
        (self.yty - 2.0 * beta.dot(&self.xty) + quad).max(0.0)
    }
}

/// Solves `(XᵀX + λ D) β = Xᵀy` with `D = diag(0,…,0,1,…,1)`, `u` zeros.
pub fn solve_penalized(stats: &GramStats, unpenalized: usize, lambda: f64) -> Result<DVector<f64>> {
    let q = stats.xtx.nrows();
    let mut a = stats.xtx.clone();
    for j in unpenalized..q {
        a[(j, j)] += lambda;
    }
    solve_spd(a, &stats.xty)
}

/// Cholesky solve with a small diagonal jitter retried on failure.
pub fn solve_spd(a: DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let q = a.nrows();
    if q == 0 {
        return Ok(DVector::zeros(0));
    }
    let scale = (0..q).map(|j| a[(j, j)].abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let mut jitter = 0.0;
    for _ in 0..6 {
        let mut m = a.clone();
        for j in 0..q {
            m[(j, j)] += jitter;
        }
        if let Some(ch) = m.cholesky() {
            let x = ch.solve(b);
            if x.iter().all(|v| v.is_finite()) {
                return Ok(x);
            }
        }
        jitter = if jitter == 0.0 { 1e-12 * scale } else { jitter * 100.0 };
    }
    Err(Error::Degenerate("normal equations are singular".into()))
}

/// Result of a penalized fit.
#[derive(Debug, Clone)]
pub struct PenalizedFit {
    /// Zero beyond `columns`.
    pub coef: DVector<f64>,
    pub lambda: f64,
    /// Leading design columns the chosen model uses.
    pub columns: usize,
    /// Mean held-out squared error per candidate, grouped by model size and
    /// then in penalty order.
    pub cv_errors: Vec<f64>,
}

fn solve_leading(stats: &GramStats, columns: usize, unpenalized: usize, lambda: f64) -> Result<DVector<f64>> {
    let q = stats.xtx.nrows();
    if columns == q {
        return solve_penalized(stats, unpenalized, lambda);
    }
    let sub = GramStats {
        xtx: stats.xtx.view((0, 0), (columns, columns)).into_owned(),
        xty: stats.xty.rows(0, columns).into_owned(),
        yty: stats.yty,
        n: stats.n,
    };
    let beta = solve_penalized(&sub, unpenalized, lambda)?;
    Ok(beta.resize_vertically(q, 0.0))
}

/// Penalized least squares with `λ` chosen by `cv_folds`-fold cross-validation
/// (row `i` goes to fold `i mod cv_folds`). With `nested = Some(k)` the model
/// using only the first `k` columns competes with the full one. Ties go to
/// the smaller model, then to the larger penalty.
pub fn penalized_ls_cv(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    unpenalized: usize,
    lambdas: &[f64],
    cv_folds: usize,
    nested: Option<usize>,
) -> Result<PenalizedFit> {
    let n = x.nrows();
    let q = x.ncols();
    if y.len() != n {
        return Err(Error::Shape { expected: n, got: y.len() });
    }
    if lambdas.is_empty() {
        return Err(Error::Usage("empty penalty grid".into()));
    }
    if let Some(bad) = lambdas.iter().find(|l| !(**l >= 0.0) || !l.is_finite()) {
        return Err(Error::Usage(format!("penalty {bad} must be finite and nonnegative")));
    }
    let sizes: Vec<usize> = match nested {
        Some(k) if k >= unpenalized && k < q => vec![k, q],
        _ => vec![q],
    };
    let total = GramStats::new(x, y);
    if n < 2 * cv_folds.max(2) || (lambdas.len() == 1 && sizes.len() == 1) {
        // Too few rows to cross-validate: take the smallest model and the
        // largest penalty.
        let lambda = lambdas.iter().copied().fold(0.0, f64::max);
        let coef = solve_leading(&total, sizes[0], unpenalized, lambda)?;
        return Ok(PenalizedFit { coef, lambda, columns: sizes[0], cv_errors: Vec::new() });
    }
    let folds: Vec<GramStats> = (0..cv_folds)
        .map(|f| {
            let rows: Vec<usize> = (f..n).step_by(cv_folds).collect();
            let xf = x.select_rows(rows.iter());
            let yf = DVector::from_iterator(rows.len(), rows.iter().map(|&i| y[i]));
            GramStats::new(&xf, &yf)
        })
        .collect();
    let candidates: Vec<(usize, f64)> = sizes.iter().flat_map(|&k| lambdas.iter().map(move |&l| (k, l))).collect();
    let mut cv_errors = vec![0.0; candidates.len()];
    for held in &folds {
        let train = total.minus(held);
        for (err, &(k, lambda)) in cv_errors.iter_mut().zip(&candidates) {
            *err += match solve_leading(&train, k, unpenalized, lambda) {
                Ok(beta) => held.sse(&beta),
                Err(_) => f64::INFINITY,
            };
        }
    }
    for e in cv_errors.iter_mut() {
        *e /= n as f64;
    }
    let mut best = 0;
    for (j, e) in cv_errors.iter().enumerate() {
        let (k, l) = candidates[j];
        let (kb, lb) = candidates[best];
        let better = *e < cv_errors[best] || (*e == cv_errors[best] && k == kb && l > lb);
        if better {
            best = j;
        }
    }
    let (columns, lambda) = candidates[best];
    let coef = solve_leading(&total, columns, unpenalized, lambda)?;
    Ok(PenalizedFit { coef, lambda, columns, cv_errors })
}

/// Prepends a column of ones.
pub fn with_intercept(x: &DMatrix<f64>) -> DMatrix<f64> {
    x.clone().insert_column(0, 1.0)
}

/// Sample mean and unbiased standard deviation.
pub fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}
