#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use nddid::estimators::{standard_normals, TruthModel};
use nddid::simulation::Dgp;
use nddid::Result;

/// `min ½xᵀPx + qᵀx` s.t. `Ax = b`, `Gx ≤ h`.
pub struct DenseQp {
    pub p: DMatrix<f64>,
    pub q: DVector<f64>,
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub g: DMatrix<f64>,
    pub h: DVector<f64>,
}

pub struct IpmSolution {
    pub x: DVector<f64>,
    pub objective: f64,
    pub iterations: usize,
}

fn max_step(v: &DVector<f64>, dv: &DVector<f64>) -> f64 {
    v.iter().zip(dv.iter()).filter(|(_, d)| **d < 0.0).map(|(x, d)| -x / d).fold(1.0, f64::min)
}

/// Mehrotra predictor-corrector on the dense KKT system.
pub fn interior_point(qp: &DenseQp) -> IpmSolution {
    let nx = qp.p.nrows();
    let ne = qp.a.nrows();
    let ni = qp.g.nrows();
    let mut x = DVector::zeros(nx);
    let mut y = DVector::zeros(ne);
    let mut s = DVector::from_element(ni, 1.0);
    let mut z = DVector::from_element(ni, 1.0);
    let mut it = 0;
    while it < 200 {
        it += 1;
        let rd = &qp.p * &x + &qp.q + qp.a.tr_mul(&y) + qp.g.tr_mul(&z);
        let rp = &qp.a * &x - &qp.b;
        let ri = &qp.g * &x + &s - &qp.h;
        let mu = s.dot(&z) / ni as f64;
        let scale = 1.0 + qp.h.amax() + qp.b.amax();
        if rd.amax() < 1e-11 * scale && rp.amax() < 1e-11 * scale && ri.amax() < 1e-11 * scale && mu < 1e-13 * scale {
            break;
        }
        let w = z.component_div(&s);
        let mut kkt = DMatrix::zeros(nx + ne, nx + ne);
        let gw = DMatrix::from_fn(ni, nx, |r, c| qp.g[(r, c)] * w[r]);
        kkt.view_mut((0, 0), (nx, nx)).copy_from(&(&qp.p + qp.g.tr_mul(&gw)));
        kkt.view_mut((0, nx), (nx, ne)).copy_from(&qp.a.transpose());
        kkt.view_mut((nx, 0), (ne, nx)).copy_from(&qp.a);
        let lu = kkt.lu();
        if !lu.is_invertible() {
            // Complementarity has collapsed to round-off; the iterate is optimal.
            break;
        }
        let solve = |rc: &DVector<f64>| {
            // dz = W(G dx + ri) − S⁻¹rc, ds = −ri − G dx
            let t = w.component_mul(&ri) - rc.component_div(&s);
            let mut rhs = DVector::zeros(nx + ne);
            rhs.rows_mut(0, nx).copy_from(&(-&rd - qp.g.tr_mul(&t)));
            rhs.rows_mut(nx, ne).copy_from(&(-&rp));
            let sol = lu.solve(&rhs).expect("KKT system is nonsingular");
            let dx = sol.rows(0, nx).into_owned();
            let dy = sol.rows(nx, ne).into_owned();
            let gdx = &qp.g * &dx;
            let dz = w.component_mul(&(&gdx + &ri)) - rc.component_div(&s);
            let ds = -&ri - gdx;
            (dx, dy, ds, dz)
        };
        let rc_aff = s.component_mul(&z);
        let (_, _, ds_a, dz_a) = solve(&rc_aff);
        let a_aff = max_step(&s, &ds_a).min(max_step(&z, &dz_a));
        let mu_aff = (&s + a_aff * &ds_a).dot(&(&z + a_aff * &dz_a)) / ni as f64;
        let sigma = (mu_aff / mu).powi(3);
        let rc = rc_aff + ds_a.component_mul(&dz_a) - DVector::from_element(ni, sigma * mu);
        let (dx, dy, ds, dz) = solve(&rc);
        let alpha = (0.99 * max_step(&s, &ds).min(max_step(&z, &dz))).min(1.0);
        x += alpha * dx;
        y += alpha * dy;
        s += alpha * ds;
        z += alpha * dz;
    }
    let objective = 0.5 * x.dot(&(&qp.p * &x)) + qp.q.dot(&x);
    IpmSolution { x, objective, iterations: it }
}

/// The balancing problem written out in `x = (γ, α, β, δ, η)` from its raw
/// ingredients, independently of the library's assembly.
pub fn balancing_dense_qp(f: &DMatrix<f64>, s: &[bool], t: &[bool], sigma2: f64) -> DenseQp {
    let (n, p) = (f.nrows(), f.ncols());
    let nx = n + 4;
    let mut pm = DMatrix::zeros(nx, nx);
    for i in 0..n {
        pm[(i, i)] = 2.0 * sigma2;
    }
    for k in 0..4 {
        pm[(n + k, n + k)] = 2.0;
    }
    let ind = |i: usize| (s[i] as u8 as f64, t[i] as u8 as f64);
    let mut a = DMatrix::zeros(4, nx);
    for i in 0..n {
        let (si, ti) = ind(i);
        a[(0, i)] = 1.0;
        a[(1, i)] = si;
        a[(2, i)] = ti;
        a[(3, i)] = si * ti;
    }
    let b = DVector::from_vec(vec![0.0, 0.0, 0.0, 1.0]);
    let fbar: Vec<f64> = (0..p).map(|j| f.column(j).sum() / n as f64).collect();
    let mut g = DMatrix::zeros(8 * p, nx);
    let mut h = DVector::zeros(8 * p);
    // Blocks: α bounds Fᵀγ, β bounds Fᵀ(T∘γ), δ bounds Fᵀ(S∘γ), η bounds Fᵀ(S∘T∘γ) − F̄.
    for blk in 0..4 {
        for j in 0..p {
            let r = 2 * (blk * p + j);
            for i in 0..n {
                let (si, ti) = ind(i);
                let m = [1.0, ti, si, si * ti][blk];
                g[(r, i)] = m * f[(i, j)];
                g[(r + 1, i)] = -m * f[(i, j)];
            }
            g[(r, n + blk)] = -1.0;
            g[(r + 1, n + blk)] = -1.0;
            let target = if blk == 3 { fbar[j] } else { 0.0 };
            h[r] = target;
            h[r + 1] = -target;
        }
    }
    DenseQp { p: pm, q: DVector::zeros(nx), a, b, g, h }
}

/// Random balancing instance with every cell present.
pub fn random_instance(rng: &mut ChaCha8Rng, n: usize, p: usize) -> (DMatrix<f64>, Vec<bool>, Vec<bool>, f64) {
    let f = DMatrix::from_fn(n, p, |_, _| rng.random::<f64>() * 2.0 - 1.0);
    let mut s = Vec::with_capacity(n);
    let mut t = Vec::with_capacity(n);
    for i in 0..n {
        let c = if i < 4 { i } else { rng.random_range(0..4) };
        s.push(c >= 2);
        t.push(c % 2 == 1);
    }
    let sigma2 = 0.1 + rng.random::<f64>() * 2.0;
    (f, s, t, sigma2)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

pub fn independent_cells(s: f64, t: f64) -> [f64; 4] {
    [(1.0 - s) * (1.0 - t), (1.0 - s) * t, s * (1.0 - t), s * t]
}

/// Gaussian covariates, independent `S ⊥ T | X` with the given marginals, and
/// `Y = b + Sξ + Tρ + STτ + ε`.
pub struct CustomDgp {
    pub label: &'static str,
    pub d: usize,
    pub s: fn(&[f64]) -> f64,
    pub t: fn(&[f64]) -> f64,
    /// `(b, ξ, ρ, τ)`.
    pub parts: fn(&[f64]) -> (f64, f64, f64, f64),
    pub ate: f64,
}

impl TruthModel for CustomDgp {
    fn d(&self) -> usize {
        self.d
    }

    fn draw_x(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        standard_normals(rng, self.d)
    }

    fn cells(&self, x: &[f64]) -> Result<[f64; 4]> {
        Ok(independent_cells((self.s)(x), (self.t)(x)))
    }

    fn tau(&self, x: &[f64]) -> f64 {
        (self.parts)(x).3
    }
}

impl Dgp for CustomDgp {
    fn name(&self) -> String {
        self.label.to_string()
    }

    fn outcome_cells(&self, x: &[f64]) -> [f64; 4] {
        let (b, xi, rho, tau) = (self.parts)(x);
        [b, b + rho, b + xi, b + xi + rho + tau]
    }

    fn ate(&self) -> f64 {
        self.ate
    }
}

/// Heterogeneous effect `τ = 1 + x₁` with `S ⊥ T | X` and an `s` that is
/// asymmetric in `x₁`, so the weighted target differs from the average effect.
pub fn weighted_target_dgp() -> CustomDgp {
    CustomDgp {
        label: "hetero",
        d: 2,
        s: |x| sigmoid(1.5 * x[0] - 0.5).clamp(0.05, 0.95),
        t: |x| sigmoid(0.8 * x[1]).clamp(0.05, 0.95),
        parts: |x| (x[0] + 0.5 * x[1], 0.5 * x[1], x[0], 1.0 + x[0]),
        ate: 1.0,
    }
}

/// Constant effect with strongly varying propensities.
pub fn variance_ordering_dgp() -> CustomDgp {
    CustomDgp {
        label: "vord",
        d: 2,
        s: |x| sigmoid(2.0 * x[0]).clamp(0.05, 0.95),
        t: |x| sigmoid(2.0 * x[1]).clamp(0.05, 0.95),
        parts: |x| (x[0] + x[1], 0.5 * x[0], 0.5 * x[1], 1.0),
        ate: 1.0,
    }
}

/// No effect anywhere; nonconstant propensities and nuisances.
pub fn null_dgp() -> CustomDgp {
    CustomDgp {
        label: "null",
        d: 3,
        s: |x| sigmoid(0.8 * x[0] - 0.4 * x[2]).clamp(0.1, 0.9),
        t: |x| sigmoid(0.6 * x[1]).clamp(0.1, 0.9),
        parts: |x| ((x[0] + x[1]).max(0.0) + 0.5 * x[2], 0.5 * x[1], x[0] - 0.3 * x[2], 0.0),
        ate: 0.0,
    }
}

/// Constant propensities `s = t = 0.5` with `τ = τ₀`.
pub fn balanced_dgp(tau: f64) -> CustomDgp {
    let parts: fn(&[f64]) -> (f64, f64, f64, f64) = if tau == 0.0 {
        |x| (x[0], 0.5 * x[1], 0.3, 0.0)
    } else {
        |x| (x[0], 0.5 * x[1], 0.3, 1.0)
    };
    CustomDgp { label: "balanced", d: 2, s: |_| 0.5, t: |_| 0.5, parts, ate: tau }
}

/// Random cell means `g` and cell probabilities `e` whose conditioning
/// factor is at least `f_min`.
pub fn random_cells(rng: &mut ChaCha8Rng, f_min: f64) -> ([f64; 4], [f64; 4]) {
    loop {
        let raw: Vec<f64> = (0..4).map(|_| 0.02 + rng.random::<f64>()).collect();
        let total: f64 = raw.iter().sum();
        let e = [raw[0] / total, raw[1] / total, raw[2] / total, raw[3] / total];
        let s = e[2] + e[3];
        let t = e[1] + e[3];
        let delta = e[3] - s * t;
        let f = 1.0 - delta * delta / (s * (1.0 - s) * t * (1.0 - t));
        if f >= f_min {
            let g = [0, 1, 2, 3].map(|_| rng.random::<f64>() * 20.0 - 10.0);
            return (g, e);
        }
    }
}
