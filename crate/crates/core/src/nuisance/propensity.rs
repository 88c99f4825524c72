//! Four-class multinomial logit for the cell probabilities `e_{s,t}(x)`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::Cell;
use crate::error::{Error, Result};

const MAX_NEWTON: usize = 100;
const GRAD_TOL: f64 = 1e-7;

/// Multinomial logit with class `(0,0)` as reference (its row is zero).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropensityModel {
    /// `4 × (p + 1)`, intercept first, rows in cell index order.
    pub coefficients: Vec<Vec<f64>>,
    pub clip: f64,
    pub iterations: usize,
}

/// Raises every probability to at least `eta` while keeping the sum at one.
///
/// Entries below `eta` are pinned to it and the rest rescaled; repeated
/// until no unpinned entry falls below `eta`.
pub fn clip_probabilities(p: &mut [f64; 4], eta: f64) {
    let mut pinned = [false; 4];
    loop {
        for (pi, pin) in p.iter().zip(pinned.iter_mut()) {
            if *pi < eta {
                *pin = true;
            }
        }
        let k = pinned.iter().filter(|&&b| b).count();
        if k == 0 {
            break;
        }
        let free: f64 = p.iter().zip(&pinned).filter(|(_, &b)| !b).map(|(v, _)| v).sum();
        let target = 1.0 - k as f64 * eta;
        let mut changed = false;
        for (pi, &pin) in p.iter_mut().zip(&pinned) {
            if pin {
                *pi = eta;
            } else {
                *pi *= target / free;
                if *pi < eta {
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
}

fn softmax(eta: &[f64; 4]) -> [f64; 4] {
    let mx = eta.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut p = [0.0; 4];
    let mut z = 0.0;
    for (pk, ek) in p.iter_mut().zip(eta) {
        *pk = (ek - mx).exp();
        z += *pk;
    }
    for pk in p.iter_mut() {
        *pk /= z;
    }
    p
}

struct Objective {
    loss: f64,
    probs: Vec<[f64; 4]>,
}

fn evaluate(x: &DMatrix<f64>, labels: &[usize], w: &DMatrix<f64>, penalty: f64) -> Objective {
    // w is q × 3 (classes 1..3); linear predictors n × 3.
    let lin = x * w;
    let mut loss = 0.0;
    let mut probs = Vec::with_capacity(x.nrows());
    for (i, &label) in labels.iter().enumerate() {
        let eta = [0.0, lin[(i, 0)], lin[(i, 1)], lin[(i, 2)]];
        let p = softmax(&eta);
        loss -= p[label].max(f64::MIN_POSITIVE).ln();
        probs.push(p);
    }
    for c in 0..3 {
        for j in 1..w.nrows() {
            loss += penalty * w[(j, c)].powi(2);
        }
    }
    Objective { loss, probs }
}

/// Penalized maximum-likelihood fit by damped Newton.
///
/// `features` excludes the intercept, which is added and left unpenalized.
pub fn fit_propensity(features: &DMatrix<f64>, cells: &[Cell], clip: f64, penalty: f64) -> Result<PropensityModel> {
    let n = features.nrows();
    if cells.len() != n {
        return Err(Error::Shape { expected: n, got: cells.len() });
    }
    let mut counts = [0usize; 4];
    for c in cells {
        counts[c.index()] += 1;
    }
    if let Some(i) = counts.iter().position(|&c| c == 0) {
        return Err(Error::Overlap(format!("no training observations in cell {}", Cell::from_index(i))));
    }
    let x = features.clone().insert_column(0, 1.0);
    let q = x.ncols();
    let labels: Vec<usize> = cells.iter().map(|c| c.index()).collect();
    let mut w = DMatrix::<f64>::zeros(q, 3);
    let mut obj = evaluate(&x, &labels, &w, penalty);
    let dim = 3 * q;
    let mut grad_norm = f64::INFINITY;
    for iter in 0..MAX_NEWTON {
        // Gradient of the penalized negative log-likelihood.
        let mut resid = DMatrix::<f64>::zeros(n, 3);
        for i in 0..n {
            for c in 0..3 {
                let y = (labels[i] == c + 1) as u8 as f64;
                resid[(i, c)] = obj.probs[i][c + 1] - y;
            }
        }
        let mut g = x.tr_mul(&resid);
        for c in 0..3 {
            for j in 1..q {
                g[(j, c)] += 2.0 * penalty * w[(j, c)];
            }
        }
        grad_norm = g.amax();
        if grad_norm <= GRAD_TOL * (n as f64).max(1.0) {
            return Ok(finish(&w, clip, iter));
        }
        // Hessian blocks H_ab = Xᵀ diag(p_a(δ_ab − p_b)) X.
        let mut h = DMatrix::<f64>::zeros(dim, dim);
        for a in 0..3 {
            for b in a..3 {
                let wts: Vec<f64> = obj
                    .probs
                    .iter()
                    .map(|p| p[a + 1] * (((a == b) as u8 as f64) - p[b + 1]))
                    .collect();
                let mut xw = x.clone();
                for (i, mut row) in xw.row_iter_mut().enumerate() {
                    row *= wts[i];
                }
                let block = x.tr_mul(&xw);
                h.view_mut((a * q, b * q), (q, q)).copy_from(&block);
                if a != b {
                    h.view_mut((b * q, a * q), (q, q)).copy_from(&block.transpose());
                }
            }
            for j in 1..q {
                h[(a * q + j, a * q + j)] += 2.0 * penalty;
            }
        }
        for j in 0..dim {
            h[(j, j)] += 1e-10;
        }
        let gvec = DVector::from_iterator(dim, (0..3).flat_map(|c| (0..q).map(move |j| (j, c))).map(|(j, c)| g[(j, c)]));
        let step = match h.cholesky() {
            Some(ch) => ch.solve(&gvec),
            None => gvec.clone() * (1.0 / (n as f64)),
        };
        let decrement = gvec.dot(&step);
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let mut trial = w.clone();
            for c in 0..3 {
                for j in 0..q {
                    trial[(j, c)] -= t * step[c * q + j];
                }
            }
            let cand = evaluate(&x, &labels, &trial, penalty);
            if cand.loss <= obj.loss - 1e-4 * t * decrement {
                w = trial;
                obj = cand;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted || decrement.abs() < 1e-18 {
            // No further descent is possible in floating point.
            if decrement.abs() <= 1e-9 * (1.0 + obj.loss.abs()) {
                return Ok(finish(&w, clip, iter + 1));
            }
            return Err(Error::Convergence { iterations: iter + 1, grad_norm, loss: obj.loss });
        }
    }
    Err(Error::Convergence { iterations: MAX_NEWTON, grad_norm, loss: obj.loss })
}

fn finish(w: &DMatrix<f64>, clip: f64, iterations: usize) -> PropensityModel {
    let q = w.nrows();
    let mut coefficients = vec![vec![0.0; q]];
    for c in 0..3 {
        coefficients.push(w.column(c).iter().copied().collect());
    }
    PropensityModel { coefficients, clip, iterations }
}

impl PropensityModel {
    /// Clipped cell probabilities per row.
    pub fn predict(&self, features: &DMatrix<f64>) -> Result<Vec<[f64; 4]>> {
        let q = self.coefficients[0].len();
        if features.ncols() + 1 != q {
            return Err(Error::Shape { expected: q - 1, got: features.ncols() });
        }
        let mut out = Vec::with_capacity(features.nrows());
        for i in 0..features.nrows() {
            let mut eta = [0.0; 4];
            for (c, e) in eta.iter_mut().enumerate() {
                let coef = &self.coefficients[c];
                *e = coef[0] + (0..q - 1).map(|j| coef[j + 1] * features[(i, j)]).sum::<f64>();
            }
            let mut p = softmax(&eta);
            clip_probabilities(&mut p, self.clip);
            out.push(p);
        }
        Ok(out)
    }
}
