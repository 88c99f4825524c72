//! Scaled tensor-product Hermite features.
//!
//! Term `j` is `scale_j · Π_i h_{m_i}(x_i)` where `h_k = He_k / √(k!)` is the
//! probabilists' Hermite polynomial normalized to be orthonormal under the
//! standard Gaussian, and `m` ranges over every multi-index of total degree
//! `1..=max_order`. Terms are listed in graded order: by total degree, then
//! lexicographically descending in the exponents, so for `d = 2` the order is
//! `(1,0), (0,1), (2,0), (1,1), (0,2), ...`.
//!
//! Raw weights are `1 / (k √n_k)` for a term of degree `k`, with `n_k` the
//! number of terms of that degree, rescaled so that `Σ scale² = 1`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Default cap on the number of basis terms.
pub const MAX_TERMS: usize = 5000;

/// Degree used when none is configured: 3 for up to six covariates, else 2.
pub fn default_max_order(d: usize) -> usize {
    if d <= 6 {
        3
    } else {
        2
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HermiteBasis<T> {
    d: usize,
    max_order: usize,
    terms: Vec<Vec<u32>>,
    scale: Vec<T>,
}

/// Number of multi-indices in `d` variables with total degree exactly `k`.
pub fn terms_of_degree(d: usize, k: usize) -> Option<usize> {
    binomial(k + d - 1, d - 1)
}

fn binomial(n: usize, k: usize) -> Option<usize> {
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
        if acc > usize::MAX as u128 {
            return None;
        }
    }
    Some(acc as usize)
}

fn push_compositions(remaining: u32, slots: usize, prefix: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
    if slots == 1 {
        prefix.push(remaining);
        out.push(prefix.clone());
        prefix.pop();
        return;
    }
    for first in (0..=remaining).rev() {
        prefix.push(first);
        push_compositions(remaining - first, slots - 1, prefix, out);
        prefix.pop();
    }
}

pub fn build_basis<T: Real>(d: usize, max_order: usize) -> Result<HermiteBasis<T>> {
    build_basis_with_cap(d, max_order, MAX_TERMS)
}

pub fn build_basis_with_cap<T: Real>(d: usize, max_order: usize, cap: usize) -> Result<HermiteBasis<T>> {
    if d == 0 || max_order == 0 {
        return Err(Error::EmptyBasis);
    }
    let mut counts = Vec::with_capacity(max_order);
    let mut total: usize = 0;
    for k in 1..=max_order {
        let nk = terms_of_degree(d, k).ok_or(Error::Capacity { terms: usize::MAX, cap })?;
        total = total.checked_add(nk).ok_or(Error::Capacity { terms: usize::MAX, cap })?;
        if total > cap {
            return Err(Error::Capacity { terms: total, cap });
        }
        counts.push(nk);
    }
    let mut terms = Vec::with_capacity(total);
    let mut raw = Vec::with_capacity(total);
    for (k, &nk) in (1..=max_order).zip(&counts) {
        let before = terms.len();
        push_compositions(k as u32, d, &mut Vec::with_capacity(d), &mut terms);
        debug_assert_eq!(terms.len() - before, nk);
        let w = 1.0 / (k as f64 * (nk as f64).sqrt());
        raw.extend(std::iter::repeat(w).take(nk));
    }
    let norm = raw.iter().map(|w| w * w).sum::<f64>().sqrt();
    let scale = raw.iter().map(|w| T::from_f64(w / norm).expect("scale representable")).collect();
    Ok(HermiteBasis { d, max_order, terms, scale })
}

/// `h_0(x), ..., h_order(x)` by the normalized three-term recurrence
/// `h_{k+1} = (x h_k − √k h_{k−1}) / √(k+1)`.
pub fn normalized_hermite<T: Real>(x: T, order: usize) -> Vec<T> {
    let mut h = Vec::with_capacity(order + 1);
    h.push(T::one());
    if order >= 1 {
        h.push(x);
    }
    for k in 1..order {
        let kf = T::from_usize(k).unwrap();
        let next = (x * h[k] - kf.sqrt() * h[k - 1]) / (kf + T::one()).sqrt();
        h.push(next);
    }
    h
}

impl<T: Real> HermiteBasis<T> {
    pub fn d(&self) -> usize {
        self.d
    }

    pub fn max_order(&self) -> usize {
        self.max_order
    }

    /// Number of terms `p`.
    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> &[Vec<u32>] {
        &self.terms
    }

    pub fn scales(&self) -> &[T] {
        &self.scale
    }

    /// Position of a multi-index in the term order.
    pub fn index_of(&self, multi_index: &[u32]) -> Option<usize> {
        self.terms.iter().position(|m| m.as_slice() == multi_index)
    }

    pub fn features(&self, x: &[T]) -> Result<Vec<T>> {
        let mut out = vec![T::zero(); self.len()];
        self.features_into(x, &mut out)?;
        Ok(out)
    }

    /// Products of normalized Hermite polynomials without the scale factors.
    pub fn unscaled_features(&self, x: &[T]) -> Result<Vec<T>> {
        let mut out = self.features(x)?;
        for (v, s) in out.iter_mut().zip(&self.scale) {
            *v = *v / *s;
        }
        Ok(out)
    }

    fn features_into(&self, x: &[T], out: &mut [T]) -> Result<()> {
        if x.len() != self.d {
            return Err(Error::Shape { expected: self.d, got: x.len() });
        }
        let tables: Vec<Vec<T>> = x.iter().map(|&xi| normalized_hermite(xi, self.max_order)).collect();
        for ((slot, m), &s) in out.iter_mut().zip(&self.terms).zip(&self.scale) {
            let mut v = s;
            for (table, &deg) in tables.iter().zip(m) {
                if deg > 0 {
                    v = v * table[deg as usize];
                }
            }
            *slot = v;
        }
        Ok(())
    }
}

impl HermiteBasis<f64> {
    /// Row `i` holds `features(x_i)`.
    pub fn matrix(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.ncols() != self.d {
            return Err(Error::Shape { expected: self.d, got: x.ncols() });
        }
        let n = x.nrows();
        let mut out = DMatrix::zeros(n, self.len());
        let mut row = vec![0.0; self.d];
        let mut feats = vec![0.0; self.len()];
        for i in 0..n {
            for (j, r) in row.iter_mut().enumerate() {
                *r = x[(i, j)];
            }
            self.features_into(&row, &mut feats)?;
            for (j, &f) in feats.iter().enumerate() {
                out[(i, j)] = f;
            }
        }
        Ok(out)
    }

    /// Structured description of the terms and scales.
    pub fn describe(&self) -> String {
        serde_json::to_string_pretty(self).expect("basis serializes")
    }
}

/// Feature matrix of the dataset's covariates, taken as already standardized.
pub fn basis_matrix(basis: &HermiteBasis<f64>, data: &Dataset) -> Result<DMatrix<f64>> {
    basis.matrix(data.x())
}

/// Per-column centering and scaling to unit sample standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
}

impl Standardizer {
    pub fn fit(x: &DMatrix<f64>) -> Self {
        let n = x.nrows() as f64;
        let mut mean = Vec::with_capacity(x.ncols());
        let mut sd = Vec::with_capacity(x.ncols());
        for col in x.column_iter() {
            let m = col.iter().sum::<f64>() / n;
            let var = col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
            mean.push(m);
            sd.push(if var > 0.0 { var.sqrt() } else { 1.0 });
        }
        Standardizer { mean, sd }
    }

    pub fn apply(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| (x[(i, j)] - self.mean[j]) / self.sd[j])
    }
}

/// Standardizes the covariates with their own sample moments, then expands.
pub fn standardized_basis_matrix(basis: &HermiteBasis<f64>, data: &Dataset) -> Result<DMatrix<f64>> {
    let z = Standardizer::fit(data.x()).apply(data.x());
    basis.matrix(&z)
}
