//! Synthetic data with known ground truth and the Monte Carlo harness.

mod setups;
mod trials;

pub use setups::{gen_setup, Setup, SetupModel, SetupSpec, ETA, ETA_C};
pub use trials::{rep_seed, run_dgp_trials, run_trials, splitmix64, MetricsRow, MetricsTable};

use nalgebra::DMatrix;
use rand::{Rng, RngCore};
use rand_distr::StandardNormal;

use crate::data::{Dataset, FoldAssignment};
use crate::error::{Error, Result};
use crate::estimators::{tr_from_coefficients, TruthModel};
use crate::nuisance::CrossFittedNuisances;
use crate::orthogonal::{cell_moments, coefficients};
use crate::report::{EstimateReport, Method};

/// A data-generating process `Y = g(X, S, T) + ε` with known cell
/// probabilities.
pub trait Dgp: TruthModel {
    fn name(&self) -> String;
    /// `g(x, s, t)` in cell index order `(0,0), (0,1), (1,0), (1,1)`.
    fn outcome_cells(&self, x: &[f64]) -> [f64; 4];
    fn noise_sd(&self) -> f64 {
        1.0
    }
    /// `E[τ(X)]`.
    fn ate(&self) -> f64;
}

/// Known per-observation quantities of a generated sample.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub cells: Vec<[f64; 4]>,
    pub g: Vec<[f64; 4]>,
    pub tau: Vec<f64>,
    pub ate: f64,
}

impl GroundTruth {
    /// True `m, e, ν, ς` at every observation, packaged as nuisances with
    /// every observation in fold 0.
    pub fn nuisances(&self) -> Result<CrossFittedNuisances> {
        let n = self.cells.len();
        let mut m = Vec::with_capacity(n);
        let mut nu = Vec::with_capacity(n);
        let mut sigma = Vec::with_capacity(n);
        for (g, e) in self.g.iter().zip(&self.cells) {
            let k = cell_moments(g, e);
            m.push(k.m);
            nu.push(k.nu);
            sigma.push(k.sigma);
        }
        CrossFittedNuisances::from_parts(m, self.cells.clone(), nu, sigma, vec![0; n], f64::MIN_POSITIVE)
    }

    /// Noiseless outcomes `g(X_i, S_i, T_i)`.
    pub fn noiseless_outcomes(&self, data: &Dataset) -> Vec<f64> {
        (0..data.n()).map(|i| self.g[i][data.cell(i).index()]).collect()
    }
}

/// Checks that cell probabilities are positive and sum to one.
pub fn check_cells(cells: &[f64; 4]) -> Result<()> {
    let total: f64 = cells.iter().sum();
    if cells.iter().any(|&p| !(p > 0.0)) || (total - 1.0).abs() > 1e-12 {
        return Err(Error::DgpInvariant(format!("invalid cell probabilities {cells:?}")));
    }
    Ok(())
}

/// Draws `n` observations from `dgp`.
pub fn generate(dgp: &dyn Dgp, n: usize, rng: &mut dyn RngCore) -> Result<(Dataset, GroundTruth)> {
    let d = dgp.d();
    let mut x = DMatrix::zeros(n, d);
    let (mut s, mut t, mut y) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
    let mut truth = GroundTruth {
        cells: Vec::with_capacity(n),
        g: Vec::with_capacity(n),
        tau: Vec::with_capacity(n),
        ate: dgp.ate(),
    };
    for i in 0..n {
        let xi = dgp.draw_x(rng);
        let cells = dgp.cells(&xi)?;
        check_cells(&cells)?;
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut cell = 3;
        for (k, p) in cells.iter().enumerate() {
            acc += p;
            if u < acc {
                cell = k;
                break;
            }
        }
        let g = dgp.outcome_cells(&xi);
        let eps: f64 = rng.sample(StandardNormal);
        for (j, v) in xi.iter().enumerate() {
            x[(i, j)] = *v;
        }
        s.push(cell >= 2);
        t.push(cell % 2 == 1);
        y.push(g[cell] + dgp.noise_sd() * eps);
        truth.cells.push(cells);
        truth.g.push(g);
        truth.tau.push(dgp.tau(&xi));
    }
    Ok((Dataset::new(x, s, t, y)?, truth))
}

/// Transformed regression with the true nuisances and no cross-fitting.
pub fn oracle_tr_estimate(data: &Dataset, truth: &GroundTruth) -> Result<EstimateReport> {
    let nuis = truth.nuisances()?;
    let coef = coefficients(data, &nuis)?;
    tr_from_coefficients(&coef, &FoldAssignment::single(data.n()), Method::OracleTr)
}
