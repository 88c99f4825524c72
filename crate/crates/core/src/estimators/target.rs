use rand::Rng;

use crate::error::Result;
use crate::orthogonal::abc;

/// A covariate distribution with known cell probabilities and effect.
pub trait TruthModel: Sync {
    fn d(&self) -> usize;
    fn draw_x(&self, rng: &mut dyn rand::RngCore) -> Vec<f64>;
    /// Cell probabilities in index order `(0,0), (0,1), (1,0), (1,1)`.
    fn cells(&self, x: &[f64]) -> Result<[f64; 4]>;
    fn tau(&self, x: &[f64]) -> f64;
}

/// Monte Carlo value of `E[C² τ(X)] / E[C²]` with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightedTarget {
    pub tau_bar: f64,
    pub std_err: f64,
}

/// `E[C(Z)² | X = x]`, summed exactly over the four cells.
pub fn c_squared_weight(cells: &[f64; 4]) -> Result<f64> {
    let s = cells[2] + cells[3];
    let t = cells[1] + cells[3];
    let delta = cells[3] - s * t;
    let mut w = 0.0;
    for (k, p) in cells.iter().enumerate() {
        let (_, _, c) = abc(k >= 2, k % 2 == 1, &s, &t, &cells[3], &delta, &f64::MIN_POSITIVE)?;
        w += p * c * c;
    }
    Ok(w)
}

/// Estimates the weighted target over `reps` covariate draws. The standard
/// error is the delta-method error of the ratio of means.
pub fn weighted_target(model: &dyn TruthModel, reps: usize, rng: &mut dyn rand::RngCore) -> Result<WeightedTarget> {
    let mut w = Vec::with_capacity(reps);
    let mut wt = Vec::with_capacity(reps);
    for _ in 0..reps {
        let x = model.draw_x(rng);
        let wi = c_squared_weight(&model.cells(&x)?)?;
        w.push(wi);
        wt.push(wi * model.tau(&x));
    }
    let n = reps as f64;
    let mw = w.iter().sum::<f64>() / n;
    let tau_bar = wt.iter().sum::<f64>() / n / mw;
    let var = w.iter().zip(&wt).map(|(a, b)| (b - tau_bar * a).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    Ok(WeightedTarget { tau_bar, std_err: (var / n).sqrt() / mw })
}

/// Uniform draw helper for implementors that sample standard normals.
pub fn standard_normals(rng: &mut dyn rand::RngCore, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal)).collect()
}
