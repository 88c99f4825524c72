use nalgebra::{DMatrix, DVector};

use crate::data::Cell;
use crate::error::{Error, Result};

/// Number of equality constraints on the weights.
pub const N_EQ: usize = 4;
/// Number of epigraph variables `(α, β, δ, η)`.
pub const N_EPI: usize = 4;

/// Balancing problem
///
/// ```text
/// min  σ²‖γ‖² + α² + β² + δ² + η²
/// s.t. Σγ = 0, ΣSγ = 0, ΣTγ = 0, ΣSTγ = 1,
///      ‖Fᵀγ‖∞ ≤ α, ‖Fᵀ(T∘γ)‖∞ ≤ β, ‖Fᵀ(S∘γ)‖∞ ≤ δ, ‖Fᵀ(S∘T∘γ) − F̄‖∞ ≤ η.
/// ```
///
/// Every constraint is linear in `γ` through a column of
/// `U = [1, S, T, ST, F, D_T F, D_S F, D_ST F]`, so the problem is stored
/// through `U` and its Gram matrix `G = UᵀU`.
#[derive(Debug, Clone)]
pub struct QpProblem {
    pub f_matrix: DMatrix<f64>,
    pub s: Vec<bool>,
    pub t: Vec<bool>,
    pub f_bar: DVector<f64>,
    pub sigma2: f64,
    /// Positive multiplier on the whole objective; does not change the minimizer.
    pub objective_scale: f64,
    pub(crate) u: DMatrix<f64>,
    pub(crate) gram: DMatrix<f64>,
    pub(crate) target: DVector<f64>,
}

pub fn build_qp(f_matrix: &DMatrix<f64>, s: &[bool], t: &[bool], sigma2: f64) -> Result<QpProblem> {
    let (n, p) = (f_matrix.nrows(), f_matrix.ncols());
    if p == 0 {
        return Err(Error::EmptyBasis);
    }
    for len in [s.len(), t.len()] {
        if len != n {
            return Err(Error::Shape { expected: n, got: len });
        }
    }
    if !(sigma2 > 0.0 && sigma2.is_finite()) {
        return Err(Error::Usage(format!("sigma2 must be positive, got {sigma2}")));
    }
    if f_matrix.iter().any(|v| !v.is_finite()) {
        return Err(Error::Validation("non-finite balancing feature".into()));
    }
    let mut counts = [0usize; 4];
    for i in 0..n {
        counts[Cell::new(s[i], t[i]).index()] += 1;
    }
    if let Some(c) = counts.iter().position(|&k| k == 0) {
        return Err(Error::Overlap(format!("no observations in cell {}", Cell::from_index(c))));
    }
    let f_bar = DVector::from_iterator(p, f_matrix.column_iter().map(|c| c.sum() / n as f64));
    let m = N_EQ + N_EPI * p;
    let mut u = DMatrix::zeros(n, m);
    for i in 0..n {
        let (si, ti) = (s[i] as u8 as f64, t[i] as u8 as f64);
        let mult = [1.0, ti, si, si * ti];
        u[(i, 0)] = 1.0;
        u[(i, 1)] = si;
        u[(i, 2)] = ti;
        u[(i, 3)] = si * ti;
        for (b, w) in mult.iter().enumerate() {
            if *w != 0.0 {
                for j in 0..p {
                    u[(i, N_EQ + b * p + j)] = w * f_matrix[(i, j)];
                }
            }
        }
    }
    let gram = u.tr_mul(&u);
    let mut target = DVector::zeros(m);
    target[3] = 1.0;
    for j in 0..p {
        target[N_EQ + 3 * p + j] = f_bar[j];
    }
    Ok(QpProblem {
        f_matrix: f_matrix.clone(),
        s: s.to_vec(),
        t: t.to_vec(),
        f_bar,
        sigma2,
        objective_scale: 1.0,
        u,
        gram,
        target,
    })
}

impl QpProblem {
    pub fn n(&self) -> usize {
        self.f_matrix.nrows()
    }

    pub fn p(&self) -> usize {
        self.f_matrix.ncols()
    }

    /// Number of constraint columns `4 + 4p`.
    pub fn m(&self) -> usize {
        self.u.ncols()
    }

    /// Epigraph variable bounding constraint column `j ≥ 4`.
    pub(crate) fn block(&self, j: usize) -> usize {
        (j - N_EQ) / self.p()
    }

    /// `Uᵀγ`: the four sums followed by the four balance vectors.
    pub fn moments(&self, gamma: &[f64]) -> DVector<f64> {
        self.u.tr_mul(&DVector::from_column_slice(gamma))
    }

    /// Constraint columns `U` (`n × (4 + 4p)`).
    pub fn constraint_columns(&self) -> &DMatrix<f64> {
        &self.u
    }

    /// Right-hand sides: `(0, 0, 0, 1)` then zero targets except `F̄` for the last block.
    pub fn targets(&self) -> &DVector<f64> {
        &self.target
    }

    /// Objective `scale · (σ²‖γ‖² + ‖ε‖²)`.
    pub fn objective(&self, gamma: &[f64], epigraph: &[f64; 4]) -> f64 {
        let g2: f64 = gamma.iter().map(|g| g * g).sum();
        let e2: f64 = epigraph.iter().map(|e| e * e).sum();
        self.objective_scale * (self.sigma2 * g2 + e2)
    }

    /// Largest violation of the equality and epigraph constraints.
    pub fn max_violation(&self, gamma: &[f64], epigraph: &[f64; 4]) -> f64 {
        let mo = self.moments(gamma);
        let mut worst: f64 = 0.0;
        for j in 0..self.m() {
            let r = mo[j] - self.target[j];
            let v = if j < N_EQ { r.abs() } else { (r.abs() - epigraph[self.block(j)]).max(0.0) };
            worst = worst.max(v);
        }
        worst
    }
}

/// KKT residual of a primal-dual point in original units.
///
/// Multipliers follow the Lagrangian `½xᵀPx + Σ y_r (a_rᵀx − b_r)`:
/// `y_eq` is free, `y_up[k] ≥ 0` for `U_jᵀγ − ε_b ≤ target_j` and
/// `y_lo[k] ≤ 0` for `U_jᵀγ + ε_b ≥ target_j`, with `j = 4 + k`.
/// The residual is the largest of primal violation, stationarity error,
/// multiplier sign violation and complementarity product.
pub fn kkt_residual(
    problem: &QpProblem,
    gamma: &[f64],
    epigraph: &[f64; 4],
    y_eq: &[f64],
    y_up: &[f64],
    y_lo: &[f64],
) -> f64 {
    let scale = problem.objective_scale;
    let m = problem.m();
    let mo = problem.moments(gamma);
    let mut worst: f64 = 0.0;
    let mut ybar = DVector::zeros(m);
    let mut eps_grad = [0.0; N_EPI];
    for j in 0..N_EQ {
        worst = worst.max((mo[j] - problem.target[j]).abs());
        ybar[j] = y_eq[j];
    }
    for j in N_EQ..m {
        let k = j - N_EQ;
        let b = problem.block(j);
        let up_slack = problem.target[j] + epigraph[b] - mo[j];
        let lo_slack = mo[j] + epigraph[b] - problem.target[j];
        worst = worst
            .max((-up_slack).max(0.0))
            .max((-lo_slack).max(0.0))
            .max((-y_up[k]).max(0.0))
            .max(y_lo[k].max(0.0))
            .max((y_up[k] * up_slack).abs())
            .max((y_lo[k] * lo_slack).abs());
        ybar[j] = y_up[k] + y_lo[k];
        eps_grad[b] += -y_up[k] + y_lo[k];
    }
    let stat = &problem.u * &ybar;
    for (i, g) in gamma.iter().enumerate() {
        worst = worst.max((2.0 * scale * problem.sigma2 * g + stat[i]).abs());
    }
    for b in 0..N_EPI {
        worst = worst.max((2.0 * scale * epigraph[b] + eps_grad[b]).abs());
    }
    worst
}
