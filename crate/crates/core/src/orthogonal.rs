//! Orthogonal decomposition of the outcome.
//!
//! Every outcome admits `Y = m(X) + A(Z)ν(X) + B(Z)ς(X) + C(Z)τ(X) + ε` with
//!
//! ```text
//! f = 1 − Δ² / (s(1−s) t(1−t))
//! A = (T − t − Δ(S − s)/(s(1−s))) / f
//! B = (S − s − Δ(T − t)/(t(1−t))) / f
//! C = ST − e11 − (e11/t) A − (e11/s) B
//! ```
//!
//! where `s = P(S=1|X)`, `t = P(T=1|X)`, `e11 = P(S=1,T=1|X)` and
//! `Δ = e11 − s t`. `A`, `B` and `C` have zero conditional mean given `X`,
//! and the functions here are generic over [`Field`] so the identities can be
//! checked in exact rational arithmetic.

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::nuisance::CrossFittedNuisances;
use crate::scalar::Field;

/// `1 − Δ² / (s(1−s) t(1−t))`.
pub fn conditioning_factor<T: Field>(s: &T, t: &T, delta: &T) -> T {
    let one = T::one();
    let vs = s.clone() * (one.clone() - s.clone());
    let vt = t.clone() * (one.clone() - t.clone());
    one - delta.clone() * delta.clone() / (vs * vt)
}

/// Coefficients `(A, B, C)` for one observation.
///
/// Fails with a conditioning error when `s` or `t` leaves `(0, 1)` or the
/// conditioning factor falls below `f_min`.
pub fn abc<T: Field>(s_obs: bool, t_obs: bool, s: &T, t: &T, e11: &T, delta: &T, f_min: &T) -> Result<(T, T, T)> {
    let zero = T::zero();
    let one = T::one();
    let f = conditioning_factor(s, t, delta);
    if *s <= zero || *s >= one || *t <= zero || *t >= one || !(f >= *f_min) || f <= zero {
        return Err(Error::Conditioning {
            index: 0,
            f: f.to_f64_lossy(),
            f_min: f_min.to_f64_lossy(),
        });
    }
    let so = if s_obs { one.clone() } else { zero.clone() };
    let to = if t_obs { one.clone() } else { zero.clone() };
    let ds = so.clone() - s.clone();
    let dt = to.clone() - t.clone();
    let vs = s.clone() * (one.clone() - s.clone());
    let vt = t.clone() * (one - t.clone());
    let a = (dt.clone() - delta.clone() * ds.clone() / vs) / f.clone();
    let b = (ds - delta.clone() * dt / vt) / f;
    let c = so * to - e11.clone() - e11.clone() / t.clone() * a.clone() - e11.clone() / s.clone() * b.clone();
    Ok((a, b, c))
}

/// `y − (m + a ν + b ς)`.
pub fn h_residual<T: Field>(y: &T, m: &T, a: &T, b: &T, nu: &T, sigma: &T) -> T {
    y.clone() - (m.clone() + a.clone() * nu.clone() + b.clone() * sigma.clone())
}

/// Conditional quantities implied by the four cell means `g` and cell
/// probabilities `e`, both indexed `(0,0), (0,1), (1,0), (1,1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CellMoments<T> {
    pub m: T,
    pub nu: T,
    pub sigma: T,
    pub tau: T,
    pub s: T,
    pub t: T,
    pub delta: T,
}

pub fn cell_moments<T: Field>(g: &[T; 4], e: &[T; 4]) -> CellMoments<T> {
    let one = T::one();
    let w = |i: usize| e[i].clone() * g[i].clone();
    let s = e[2].clone() + e[3].clone();
    let t = e[1].clone() + e[3].clone();
    let m = w(0) + w(1) + w(2) + w(3);
    let nu = (w(1) + w(3)) / t.clone() - (w(0) + w(2)) / (one.clone() - t.clone());
    let sigma = (w(2) + w(3)) / s.clone() - (w(0) + w(1)) / (one - s.clone());
    let tau = g[3].clone() - g[2].clone() - g[1].clone() + g[0].clone();
    let delta = e[3].clone() - s.clone() * t.clone();
    CellMoments { m, nu, sigma, tau, s, t, delta }
}

/// Largest `|m + Aν + Bς + Cτ − g(s,t)|` over the four cells.
pub fn verify_decomposition<T: Field>(g: &[T; 4], e: &[T; 4], f_min: &T) -> Result<T> {
    let k = cell_moments(g, e);
    let mut worst = T::zero();
    for (i, gi) in g.iter().enumerate() {
        let (a, b, c) = abc(i >= 2, i % 2 == 1, &k.s, &k.t, &e[3], &k.delta, f_min)?;
        let fitted = k.m.clone() + a * k.nu.clone() + b * k.sigma.clone() + c * k.tau.clone();
        let r = (fitted - gi.clone()).abs();
        if r > worst {
            worst = r;
        }
    }
    Ok(worst)
}

/// Per-observation `A, B, C, H`.
#[derive(Debug, Clone, PartialEq)]
pub struct OrthoCoefficients<T> {
    pub a: Vec<T>,
    pub b: Vec<T>,
    pub c: Vec<T>,
    pub h: Vec<T>,
}

impl<T> OrthoCoefficients<T> {
    pub fn len(&self) -> usize {
        self.c.len()
    }

    pub fn is_empty(&self) -> bool {
        self.c.is_empty()
    }
}

/// Coefficients from cross-fitted (or oracle) nuisances.
///
/// The nuisances have already had Δ shrunk to respect their conditioning
/// floor, so the check here only rejects degenerate values.
pub fn coefficients(data: &Dataset, nuis: &CrossFittedNuisances) -> Result<OrthoCoefficients<f64>> {
    let n = data.n();
    if nuis.len() != n {
        return Err(Error::Shape { expected: n, got: nuis.len() });
    }
    let mut out = OrthoCoefficients {
        a: Vec::with_capacity(n),
        b: Vec::with_capacity(n),
        c: Vec::with_capacity(n),
        h: Vec::with_capacity(n),
    };
    for i in 0..n {
        let (s, t, delta, e11) = (nuis.s[i], nuis.t[i], nuis.delta[i], nuis.e[i][3]);
        let (a, b, c) = abc(data.s()[i], data.t()[i], &s, &t, &e11, &delta, &f64::MIN_POSITIVE).map_err(|e| match e {
            Error::Conditioning { f, f_min, .. } => Error::Conditioning { index: i, f, f_min },
            other => other,
        })?;
        let h = h_residual(&data.y()[i], &nuis.m[i], &a, &b, &nuis.nu[i], &nuis.sigma[i]);
        if !(a.is_finite() && b.is_finite() && c.is_finite() && h.is_finite()) {
            return Err(Error::Degenerate(format!("non-finite orthogonal coefficient at observation {}", i + 1)));
        }
        out.a.push(a);
        out.b.push(b);
        out.c.push(c);
        out.h.push(h);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::ratio;
    use num_rational::BigRational;

    #[test]
    fn independent_half_cells() {
        let h = 0.5;
        let (a, b, c) = abc(true, true, &h, &h, &0.25, &0.0, &0.05).unwrap();
        assert_eq!((a, b, c), (0.5, 0.5, 0.25));
        let (_, _, c) = abc(true, false, &h, &h, &0.25, &0.0, &0.05).unwrap();
        assert_eq!(c, -0.25);
    }

    #[test]
    fn zero_delta_reduces_to_centered_products() {
        let (s, t) = (0.3, 0.65);
        for (so, to) in [(false, false), (false, true), (true, false), (true, true)] {
            let (a, b, c) = abc(so, to, &s, &t, &(s * t), &0.0, &0.05).unwrap();
            let (ds, dt) = (so as u8 as f64 - s, to as u8 as f64 - t);
            assert!((a - dt).abs() < 1e-15);
            assert!((b - ds).abs() < 1e-15);
            assert!((c - ds * dt).abs() < 1e-15);
        }
    }

    #[test]
    fn h_residual_arithmetic() {
        assert_eq!(h_residual(&5.0, &2.0, &0.5, &0.5, &2.0, &3.0), 0.5);
        assert_eq!(h_residual(&1.5, &1.5, &0.0, &0.0, &7.0, &-2.0), 0.0);
    }

    #[test]
    fn worked_cell_identity() {
        let g = [0.0, 1.0, 2.0, 5.0];
        let e = [0.25; 4];
        let k = cell_moments(&g, &e);
        assert_eq!((k.m, k.nu, k.sigma, k.tau), (2.0, 2.0, 3.0, 2.0));
        assert!(verify_decomposition(&g, &e, &0.05).unwrap() <= 1e-12);
        let k = cell_moments(&[3.0f64; 4], &[0.1, 0.2, 0.3, 0.4]);
        assert!(k.nu.abs() < 1e-15 && k.sigma.abs() < 1e-15 && k.tau == 0.0);
    }

    #[test]
    fn exact_rational_identity() {
        let g = [ratio(-3, 7), ratio(2, 1), ratio(5, 3), ratio(11, 4)];
        let e = [ratio(1, 10), ratio(3, 10), ratio(1, 5), ratio(2, 5)];
        let r = verify_decomposition(&g, &e, &ratio(1, 20)).unwrap();
        assert_eq!(r, BigRational::from_integer(0.into()));
    }

    #[test]
    fn poorly_conditioned_rejected() {
        // Δ close to its maximum s(1−s)t(1−t) bound.
        let (s, t) = (0.5, 0.5);
        let delta = 0.249;
        let err = abc(true, true, &s, &t, &(s * t + delta), &delta, &0.05).unwrap_err();
        assert!(matches!(err, Error::Conditioning { .. }));
    }
}
