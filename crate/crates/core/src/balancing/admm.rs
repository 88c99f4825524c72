//! Operator-splitting solver for the balancing problem.
//!
//! The iteration is the relaxed ADMM of OSQP applied to
//! `min ½xᵀPx s.t. l ≤ Ax ≤ u` with `x = (γ, ε)`. Because `P` is a multiple
//! of the identity on `γ` and every row of `A` touches `γ` through a column
//! of `U`, the `γ` iterate always lies in the range of `U`. Writing `γ = Uc`
//! turns each linear solve into an `m × m` system in `c` (`m = 4 + 4p`),
//! independent of `n`. The two epigraph rows of each column share the same
//! step size, which decouples the `ε` block into scalar updates.
//!
//! Iterates are scaled by block-uniform Ruiz equilibration. Once the ADMM
//! residuals are small the active set is read off the duals and the
//! equality-constrained problem on that set is solved directly, with a few
//! primal-dual active-set corrections; the result is accepted only when its
//! KKT residual in the original units is below the tolerance.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::Serialize;

use super::qp::{kkt_residual, QpProblem, N_EPI, N_EQ};
use crate::error::{Error, Result};

const RUIZ_ITERS: usize = 15;
const ALPHA: f64 = 1.6;
const SIGMA: f64 = 1e-6;
const RHO_INIT: f64 = 0.1;
const RHO_EQ_FACTOR: f64 = 1e3;
const CHECK_EVERY: usize = 25;
const POLISH_GATE: f64 = 1e-3;
const POLISH_EVERY_CHECKS: usize = 4;
const ACTIVE_SET_ROUNDS: usize = 12;

/// Optimal balancing weights with their optimality certificate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BalancingWeights {
    pub gamma: Vec<f64>,
    /// `(α, β, δ, η)`.
    pub epigraph: [f64; 4],
    pub objective: f64,
    pub kkt_residual: f64,
    pub solver_iterations: usize,
}

struct Scaling {
    dg: f64,
    db: [f64; N_EPI],
    e: Vec<f64>,
    c: f64,
}

fn ruiz(problem: &QpProblem) -> Scaling {
    let (n, m) = (problem.n(), problem.m());
    let u = &problem.u;
    let p_gamma = 2.0 * problem.objective_scale * problem.sigma2;
    let p_eps = 2.0 * problem.objective_scale;
    let colmax: Vec<f64> = (0..m).map(|j| u.column(j).amax()).collect();
    let mut s = Scaling { dg: 1.0, db: [1.0; N_EPI], e: vec![1.0; m], c: 1.0 };
    let inv_sqrt = |v: f64| if v > 1e-300 && v.is_finite() { 1.0 / v.sqrt() } else { 1.0 };
    for _ in 0..RUIZ_ITERS {
        let mut gamma_norm = 0.0;
        for i in 0..n {
            let mut row: f64 = 0.0;
            for j in 0..m {
                row = row.max((u[(i, j)] * s.e[j]).abs());
            }
            gamma_norm += (p_gamma * s.dg * s.dg).max(s.dg * row);
        }
        gamma_norm /= n as f64;
        let mut eps_norm = [0.0f64; N_EPI];
        for (b, en) in eps_norm.iter_mut().enumerate() {
            *en = p_eps * s.db[b] * s.db[b];
        }
        let mut row_norm = vec![0.0f64; m];
        for j in 0..m {
            row_norm[j] = s.dg * s.e[j] * colmax[j];
            if j >= N_EQ {
                let b = problem.block(j);
                let a = s.e[j] * s.db[b];
                row_norm[j] = row_norm[j].max(a);
                eps_norm[b] = eps_norm[b].max(a);
            }
        }
        s.dg *= inv_sqrt(gamma_norm);
        for b in 0..N_EPI {
            s.db[b] *= inv_sqrt(eps_norm[b]);
        }
        for j in 0..m {
            s.e[j] *= inv_sqrt(row_norm[j]);
        }
    }
    let mean_p = (n as f64 * p_gamma * s.dg * s.dg + s.db.iter().map(|d| p_eps * d * d).sum::<f64>()) / (n + N_EPI) as f64;
    s.c = (1.0 / mean_p.max(1e-300)).clamp(1e-4, 1e4);
    s
}

/// Scaled problem data and ADMM state.
struct Admm<'a> {
    problem: &'a QpProblem,
    sc: Scaling,
    gh: DMatrix<f64>,
    p_gamma: f64,
    p_eps: [f64; N_EPI],
    /// `ε` coefficient magnitude of the two rows of column `j` (zero for equalities).
    a: Vec<f64>,
    bound: Vec<f64>,
    rho: f64,
    chol: Cholesky<f64, Dyn>,
    sqrt_r: DVector<f64>,
    eps_den: [f64; N_EPI],
    c: DVector<f64>,
    eps: [f64; N_EPI],
    z_up: DVector<f64>,
    z_lo: DVector<f64>,
    y_up: DVector<f64>,
    y_lo: DVector<f64>,
}

impl<'a> Admm<'a> {
    fn new(problem: &'a QpProblem) -> Result<Self> {
        let sc = ruiz(problem);
        let m = problem.m();
        let e = DVector::from_column_slice(&sc.e);
        let mut gh = problem.gram.clone();
        for j in 0..m {
            for i in 0..m {
                gh[(i, j)] *= sc.dg * sc.dg * e[i] * e[j];
            }
        }
        let p_gamma = sc.c * 2.0 * problem.objective_scale * problem.sigma2 * sc.dg * sc.dg;
        let mut p_eps = [0.0; N_EPI];
        for b in 0..N_EPI {
            p_eps[b] = sc.c * 2.0 * problem.objective_scale * sc.db[b] * sc.db[b];
        }
        let a: Vec<f64> = (0..m).map(|j| if j < N_EQ { 0.0 } else { sc.e[j] * sc.db[problem.block(j)] }).collect();
        let bound: Vec<f64> = (0..m).map(|j| sc.e[j] * problem.target[j]).collect();
        let placeholder = Cholesky::new(DMatrix::identity(1, 1)).expect("identity");
        let mut admm = Admm {
            problem,
            sc,
            gh,
            p_gamma,
            p_eps,
            a,
            bound,
            rho: RHO_INIT,
            chol: placeholder,
            sqrt_r: DVector::zeros(m),
            eps_den: [0.0; N_EPI],
            c: DVector::zeros(m),
            eps: [0.0; N_EPI],
            z_up: DVector::zeros(m),
            z_lo: DVector::zeros(m),
            y_up: DVector::zeros(m),
            y_lo: DVector::zeros(m),
        };
        admm.factor()?;
        Ok(admm)
    }

    fn rho_of(&self, j: usize) -> f64 {
        if j < N_EQ {
            self.rho * RHO_EQ_FACTOR
        } else {
            self.rho
        }
    }

    /// Factorizes `(p_γ + σ)I + R^{1/2} Ĝ R^{1/2}` and the scalar `ε` denominators.
    fn factor(&mut self) -> Result<()> {
        let m = self.problem.m();
        for j in 0..m {
            // Equality rows have one row per column, inequality columns two.
            let r = if j < N_EQ { self.rho_of(j) } else { 2.0 * self.rho };
            self.sqrt_r[j] = r.sqrt();
        }
        let mut l = self.gh.clone();
        for j in 0..m {
            for i in 0..m {
                l[(i, j)] *= self.sqrt_r[i] * self.sqrt_r[j];
            }
            l[(j, j)] += self.p_gamma + SIGMA;
        }
        self.chol = Cholesky::new(l).ok_or_else(|| Error::Degenerate("balancing system is not positive definite".into()))?;
        let mut den = [0.0; N_EPI];
        for b in 0..N_EPI {
            den[b] = self.p_eps[b] + SIGMA;
        }
        for j in N_EQ..m {
            den[self.problem.block(j)] += 2.0 * self.rho * self.a[j] * self.a[j];
        }
        self.eps_den = den;
        Ok(())
    }

    /// Row values `Ax` for coefficients `c` and epigraph `eps`. For equality
    /// columns both entries equal the moment.
    fn rows(&self, c: &DVector<f64>, eps: &[f64; N_EPI]) -> (DVector<f64>, DVector<f64>) {
        let gc = &self.gh * c;
        let mut up = gc.clone();
        let mut lo = gc;
        for j in N_EQ..self.problem.m() {
            let b = self.problem.block(j);
            up[j] -= self.a[j] * eps[b];
            lo[j] += self.a[j] * eps[b];
        }
        (up, lo)
    }

    fn project(&self, j: usize, up: f64, lo: f64) -> (f64, f64) {
        if j < N_EQ {
            (self.bound[j], self.bound[j])
        } else {
            (up.min(self.bound[j]), lo.max(self.bound[j]))
        }
    }

    fn step(&mut self) {
        let m = self.problem.m();
        let mut rhs = DVector::zeros(m);
        let mut eps_rhs = [0.0; N_EPI];
        for b in 0..N_EPI {
            eps_rhs[b] = SIGMA * self.eps[b];
        }
        for j in 0..m {
            let r = self.rho_of(j);
            if j < N_EQ {
                rhs[j] = SIGMA * self.c[j] + r * self.z_up[j] - self.y_up[j];
            } else {
                let wu = r * self.z_up[j] - self.y_up[j];
                let wl = r * self.z_lo[j] - self.y_lo[j];
                rhs[j] = SIGMA * self.c[j] + wu + wl;
                eps_rhs[self.problem.block(j)] += self.a[j] * (wl - wu);
            }
        }
        let mut v = rhs.component_div(&self.sqrt_r);
        self.chol.solve_mut(&mut v);
        let c_t = v.component_mul(&self.sqrt_r);
        let mut eps_t = [0.0; N_EPI];
        for b in 0..N_EPI {
            eps_t[b] = eps_rhs[b] / self.eps_den[b];
        }
        let (zt_up, zt_lo) = self.rows(&c_t, &eps_t);
        self.c = &c_t * ALPHA + &self.c * (1.0 - ALPHA);
        for b in 0..N_EPI {
            self.eps[b] = ALPHA * eps_t[b] + (1.0 - ALPHA) * self.eps[b];
        }
        for j in 0..m {
            let r = self.rho_of(j);
            let ru = ALPHA * zt_up[j] + (1.0 - ALPHA) * self.z_up[j];
            let rl = ALPHA * zt_lo[j] + (1.0 - ALPHA) * self.z_lo[j];
            if j < N_EQ {
                let z = self.bound[j];
                self.y_up[j] += r * (ru - z);
                self.z_up[j] = z;
                self.z_lo[j] = z;
            } else {
                let (zu, zl) = self.project(j, ru + self.y_up[j] / r, rl + self.y_lo[j] / r);
                self.y_up[j] += r * (ru - zu);
                self.y_lo[j] += r * (rl - zl);
                self.z_up[j] = zu;
                self.z_lo[j] = zl;
            }
        }
    }

    /// Relative primal and dual residuals of the scaled problem, plus the
    /// step-size balancing ratio.
    fn residuals(&self) -> (f64, f64, f64) {
        let m = self.problem.m();
        let (ax_up, ax_lo) = self.rows(&self.c, &self.eps);
        let mut prim: f64 = 0.0;
        let mut ax_norm: f64 = 0.0;
        let mut z_norm: f64 = 0.0;
        for j in 0..m {
            prim = prim.max((ax_up[j] - self.z_up[j]).abs());
            ax_norm = ax_norm.max(ax_up[j].abs());
            z_norm = z_norm.max(self.z_up[j].abs());
            if j >= N_EQ {
                prim = prim.max((ax_lo[j] - self.z_lo[j]).abs());
                ax_norm = ax_norm.max(ax_lo[j].abs());
                z_norm = z_norm.max(self.z_lo[j].abs());
            }
        }
        // γ̂ = Û c with Û = dg · U · diag(e).
        let e = DVector::from_column_slice(&self.sc.e);
        let mut ybar = DVector::zeros(m);
        let mut eps_aty = [0.0; N_EPI];
        for j in 0..m {
            ybar[j] = if j < N_EQ { self.y_up[j] } else { self.y_up[j] + self.y_lo[j] };
            if j >= N_EQ {
                eps_aty[self.problem.block(j)] += self.a[j] * (self.y_lo[j] - self.y_up[j]);
            }
        }
        let gamma_hat = &self.problem.u * self.c.component_mul(&e) * self.sc.dg;
        let aty = &self.problem.u * ybar.component_mul(&e) * self.sc.dg;
        let mut dual: f64 = 0.0;
        let mut px_norm: f64 = 0.0;
        let mut aty_norm: f64 = 0.0;
        for i in 0..self.problem.n() {
            dual = dual.max((self.p_gamma * gamma_hat[i] + aty[i]).abs());
            px_norm = px_norm.max((self.p_gamma * gamma_hat[i]).abs());
            aty_norm = aty_norm.max(aty[i].abs());
        }
        for b in 0..N_EPI {
            dual = dual.max((self.p_eps[b] * self.eps[b] + eps_aty[b]).abs());
            px_norm = px_norm.max((self.p_eps[b] * self.eps[b]).abs());
            aty_norm = aty_norm.max(eps_aty[b].abs());
        }
        let rel_prim = prim / ax_norm.max(z_norm).max(1e-12);
        let rel_dual = dual / px_norm.max(aty_norm).max(1e-12);
        let ratio = (rel_prim / rel_dual.max(1e-300)).sqrt();
        (rel_prim, rel_dual, ratio)
    }

    /// Active-set guess from the scaled iterate: `(upper, lower)` flags.
    fn active_set(&self) -> (Vec<bool>, Vec<bool>) {
        let m = self.problem.m();
        let mut up = vec![false; m];
        let mut lo = vec![false; m];
        for j in N_EQ..m {
            up[j] = self.bound[j] - self.z_up[j] < self.y_up[j];
            lo[j] = self.z_lo[j] - self.bound[j] < -self.y_lo[j];
        }
        (up, lo)
    }
}

/// Exact solution of the problem restricted to an active set, in original units.
struct Polished {
    gamma: Vec<f64>,
    eps: [f64; N_EPI],
    y_eq: Vec<f64>,
    y_up: Vec<f64>,
    y_lo: Vec<f64>,
}

fn solve_active(problem: &QpProblem, up: &[bool], lo: &[bool]) -> Option<Polished> {
    let m = problem.m();
    // Active rows as (column, ε coefficient).
    let mut rows: Vec<(usize, f64)> = (0..N_EQ).map(|j| (j, 0.0)).collect();
    for j in N_EQ..m {
        if up[j] {
            rows.push((j, -1.0));
        }
        if lo[j] {
            rows.push((j, 1.0));
        }
    }
    let k = rows.len();
    let inv_pg = 1.0 / (2.0 * problem.objective_scale * problem.sigma2);
    let inv_pe = 1.0 / (2.0 * problem.objective_scale);
    let mut mat = DMatrix::zeros(k, k);
    for (r, &(jr, kr)) in rows.iter().enumerate() {
        for (s, &(js, ks)) in rows.iter().enumerate() {
            let mut v = problem.gram[(jr, js)] * inv_pg;
            if jr >= N_EQ && js >= N_EQ && problem.block(jr) == problem.block(js) {
                v += kr * ks * inv_pe;
            }
            mat[(r, s)] = v;
        }
    }
    let rhs = DVector::from_iterator(k, rows.iter().map(|&(j, _)| -problem.target[j]));
    let diag_max = (0..k).map(|r| mat[(r, r)]).fold(0.0, f64::max).max(1e-300);
    let mut reg = mat.clone();
    for r in 0..k {
        reg[(r, r)] += 1e-11 * diag_max;
    }
    let chol = reg.cholesky()?;
    let mut y = chol.solve(&rhs);
    for _ in 0..8 {
        let resid = &rhs - &mat * &y;
        y += chol.solve(&resid);
    }
    if y.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let mut ybar = DVector::zeros(m);
    let mut eps = [0.0; N_EPI];
    let mut y_eq = vec![0.0; N_EQ];
    let mut y_up = vec![0.0; m - N_EQ];
    let mut y_lo = vec![0.0; m - N_EQ];
    for (r, &(j, kr)) in rows.iter().enumerate() {
        ybar[j] += y[r];
        if j < N_EQ {
            y_eq[j] = y[r];
        } else {
            eps[problem.block(j)] -= kr * y[r] * inv_pe;
            if kr < 0.0 {
                y_up[j - N_EQ] = y[r];
            } else {
                y_lo[j - N_EQ] = y[r];
            }
        }
    }
    let gamma = (&problem.u * ybar * (-inv_pg)).iter().copied().collect();
    Some(Polished { gamma, eps, y_eq, y_up, y_lo })
}

/// Solves the active-set problem and applies primal-dual corrections: rows
/// with wrong-sign multipliers leave, violated rows enter.
fn polish(problem: &QpProblem, mut up: Vec<bool>, mut lo: Vec<bool>, tol: f64) -> Option<(Polished, f64)> {
    let m = problem.m();
    let mut best: Option<(Polished, f64)> = None;
    for _ in 0..ACTIVE_SET_ROUNDS {
        let sol = solve_active(problem, &up, &lo)?;
        let res = kkt_residual(problem, &sol.gamma, &sol.eps, &sol.y_eq, &sol.y_up, &sol.y_lo);
        let mo = problem.moments(&sol.gamma);
        let mut changed = false;
        for j in N_EQ..m {
            let k = j - N_EQ;
            let b = problem.block(j);
            let over = mo[j] - sol.eps[b] - problem.target[j];
            let under = problem.target[j] - mo[j] - sol.eps[b];
            if up[j] && sol.y_up[k] < 0.0 {
                up[j] = false;
                changed = true;
            } else if !up[j] && over > 0.1 * tol {
                up[j] = true;
                changed = true;
            }
            if lo[j] && sol.y_lo[k] > 0.0 {
                lo[j] = false;
                changed = true;
            } else if !lo[j] && under > 0.1 * tol {
                lo[j] = true;
                changed = true;
            }
        }
        let improved = best.as_ref().map_or(true, |(_, r)| res < *r);
        if improved {
            best = Some((sol, res));
        }
        if res <= tol || !changed {
            break;
        }
    }
    best
}

/// Solves the balancing problem to a KKT residual of at most `tol`.
pub fn solve_qp(problem: &QpProblem, tol: f64, max_iter: usize) -> Result<BalancingWeights> {
    if !(tol > 0.0) {
        return Err(Error::Usage(format!("solver tolerance must be positive, got {tol}")));
    }
    let mut admm = Admm::new(problem)?;
    let mut trace = Vec::new();
    let mut last_polish_check = None;
    let mut last_residual = f64::INFINITY;
    let mut checks = 0usize;
    for iter in 1..=max_iter {
        admm.step();
        if iter % CHECK_EVERY != 0 && iter != max_iter {
            continue;
        }
        checks += 1;
        let (rp, rd, ratio) = admm.residuals();
        let scaled = rp.max(rd);
        trace.push(scaled);
        let due = last_polish_check.map_or(true, |c| checks - c >= POLISH_EVERY_CHECKS);
        if (scaled < POLISH_GATE && due) || iter == max_iter {
            last_polish_check = Some(checks);
            let (up, lo) = admm.active_set();
            if let Some((sol, res)) = polish(problem, up, lo, tol) {
                last_residual = res;
                if res <= tol {
                    let objective = problem.objective(&sol.gamma, &sol.eps);
                    return Ok(BalancingWeights {
                        gamma: sol.gamma,
                        epigraph: sol.eps,
                        objective,
                        kkt_residual: res,
                        solver_iterations: iter,
                    });
                }
            }
        }
        if ratio.is_finite() && !(0.2..=5.0).contains(&ratio) {
            admm.rho = (admm.rho * ratio).clamp(1e-6, 1e6);
            admm.factor()?;
        }
    }
    Err(Error::NonConvergence { iterations: max_iter, residual: last_residual, trace })
}
