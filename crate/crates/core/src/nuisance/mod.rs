//! Cross-fitted nuisance functions: the outcome mean `m`, the cell
//! probabilities `e_{s,t}` (hence `s`, `t`, `Δ`) and the marginal effects
//! `ν` (of `T`) and `ς` (of `S`).

mod effect;
mod propensity;
mod ridge;

pub use effect::{fit_marginal_effect, fit_weighted_effect, EffectModel};
pub use propensity::{clip_probabilities, fit_propensity, PropensityModel};
pub use ridge::{fit_ridge, RidgeModel, CV_FOLDS};

use log::warn;
use nalgebra::DMatrix;

use crate::basis::{build_basis, normalized_hermite, Standardizer};
use crate::config::EstimationConfig;
use crate::data::{Cell, Dataset, FoldAssignment};
use crate::error::{Error, Result};
use crate::orthogonal::conditioning_factor;

/// Per-observation nuisance values, each produced by models that did not
/// see the observation (or by the true functions for oracle runs).
#[derive(Debug, Clone, PartialEq)]
pub struct CrossFittedNuisances {
    pub m: Vec<f64>,
    /// Cells in index order `(0,0), (0,1), (1,0), (1,1)`.
    pub e: Vec<[f64; 4]>,
    pub s: Vec<f64>,
    pub t: Vec<f64>,
    pub delta: Vec<f64>,
    pub nu: Vec<f64>,
    pub sigma: Vec<f64>,
    pub fold_of: Vec<usize>,
    /// Observations whose Δ was shrunk to respect `f_min`.
    pub delta_clipped: usize,
}

impl CrossFittedNuisances {
    /// Assembles nuisances from cell probabilities, deriving `s`, `t` and
    /// `Δ`. Where the conditioning factor falls below `f_min`, `Δ` is shrunk
    /// toward zero with `s` and `t` held fixed and the cells recomputed.
    pub fn from_parts(
        m: Vec<f64>,
        e: Vec<[f64; 4]>,
        nu: Vec<f64>,
        sigma: Vec<f64>,
        fold_of: Vec<usize>,
        f_min: f64,
    ) -> Result<Self> {
        let n = m.len();
        for len in [e.len(), nu.len(), sigma.len(), fold_of.len()] {
            if len != n {
                return Err(Error::Shape { expected: n, got: len });
            }
        }
        let mut out = CrossFittedNuisances {
            m,
            e: Vec::with_capacity(n),
            s: Vec::with_capacity(n),
            t: Vec::with_capacity(n),
            delta: Vec::with_capacity(n),
            nu,
            sigma,
            fold_of,
            delta_clipped: 0,
        };
        for (i, cells) in e.into_iter().enumerate() {
            let finite = cells.iter().all(|v| v.is_finite())
                && out.m[i].is_finite()
                && out.nu[i].is_finite()
                && out.sigma[i].is_finite();
            let total: f64 = cells.iter().sum();
            if !finite || cells.iter().any(|&v| v <= 0.0) || (total - 1.0).abs() > 1e-8 {
                return Err(Error::Degenerate(format!("invalid nuisance values at observation {}", i + 1)));
            }
            let s = cells[2] + cells[3];
            let t = cells[1] + cells[3];
            let mut delta = cells[3] - s * t;
            let mut cells = cells;
            if conditioning_factor(&s, &t, &delta) < f_min {
                let bound = ((1.0 - f_min) * s * (1.0 - s) * t * (1.0 - t)).sqrt();
                delta = delta.signum() * bound.min(delta.abs());
                let e11 = s * t + delta;
                cells = [1.0 - s - t + e11, t - e11, s - e11, e11];
                out.delta_clipped += 1;
            }
            out.s.push(s);
            out.t.push(t);
            out.delta.push(delta);
            out.e.push(cells);
        }
        if out.delta_clipped > 0 {
            warn!("shrunk Δ toward zero for {} observations to keep f ≥ {f_min}", out.delta_clipped);
        }
        Ok(out)
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }

    /// Probability of observation `i`'s own cell.
    pub fn own_cell(&self, i: usize, cell: Cell) -> f64 {
        self.e[i][cell.index()]
    }
}

/// Learner design matrices on standardized covariates.
#[derive(Debug, Clone)]
pub struct LearnerFeatures {
    /// Used for `m`, `ν`, `ς` and the heterogeneous effect.
    pub outcome: DMatrix<f64>,
    /// Leading columns of `outcome` that every fit keeps; the additive
    /// block after them is selected by cross-validation.
    pub outcome_core: usize,
    pub propensity: DMatrix<f64>,
}

/// Hermite interactions up to `order`, plus univariate Hermite terms of
/// degree `order + 1 ..= additive` for each covariate.
pub fn learner_matrix(z: &DMatrix<f64>, order: usize, additive: usize) -> Result<DMatrix<f64>> {
    let basis = build_basis::<f64>(z.ncols(), order)?;
    let core = basis.matrix(z)?;
    if additive <= order {
        return Ok(core);
    }
    let (n, d) = (z.nrows(), z.ncols());
    let extra = (additive - order) * d;
    let base = core.ncols();
    let mut out = core.resize_horizontally(base + extra, 0.0);
    for i in 0..n {
        for j in 0..d {
            let h = normalized_hermite(z[(i, j)], additive);
            for (k, deg) in (order + 1..=additive).enumerate() {
                let w = 1.0 / (deg as f64 * (d as f64).sqrt());
                out[(i, base + k * d + j)] = w * h[deg];
            }
        }
    }
    Ok(out)
}

impl LearnerFeatures {
    pub fn build(data: &Dataset, config: &EstimationConfig) -> Result<Self> {
        let z = Standardizer::fit(data.x()).apply(data.x());
        let d = data.d();
        let order = config.outcome_order(d);
        Ok(LearnerFeatures {
            outcome: learner_matrix(&z, order, config.additive_max_order)?,
            outcome_core: build_basis::<f64>(d, order)?.len(),
            propensity: learner_matrix(&z, config.propensity_order(d), config.propensity_additive_max_order)?,
        })
    }
}

fn select<T: Copy>(v: &[T], idx: &[usize]) -> Vec<T> {
    idx.iter().map(|&i| v[i]).collect()
}

/// Fits every nuisance on each fold complement and evaluates it on the fold.
pub fn crossfit_nuisances(
    data: &Dataset,
    folds: &FoldAssignment,
    features: &LearnerFeatures,
    config: &EstimationConfig,
) -> Result<CrossFittedNuisances> {
    let n = data.n();
    if folds.n() != n {
        return Err(Error::Shape { expected: n, got: folds.n() });
    }
    let cells = data.cells();
    folds.check_cells(&cells)?;
    let mut m = vec![0.0; n];
    let mut e = vec![[0.0; 4]; n];
    let mut nu = vec![0.0; n];
    let mut sigma = vec![0.0; n];
    for f in 0..folds.k() {
        let train = folds.complement(f);
        let eval = folds.indices(f);
        if eval.is_empty() {
            continue;
        }
        let f_tr = features.outcome.select_rows(train.iter());
        let f_ev = features.outcome.select_rows(eval.iter());
        let p_tr = features.propensity.select_rows(train.iter());
        let p_ev = features.propensity.select_rows(eval.iter());
        let y_tr = select(data.y(), &train);

        let core = features.outcome_core;
        let outcome = fit_ridge(&f_tr, &y_tr, &config.ridge_lambdas, core)?;
        let m_tr = outcome.predict(&f_tr)?;
        let prop = fit_propensity(&p_tr, &select(&cells, &train), config.eta_clip, config.propensity_penalty)?;
        let e_tr = prop.predict(&p_tr)?;
        let s_tr: Vec<f64> = e_tr.iter().map(|c| c[2] + c[3]).collect();
        let t_tr: Vec<f64> = e_tr.iter().map(|c| c[1] + c[3]).collect();
        let nu_model = fit_marginal_effect(&f_tr, &y_tr, &select(data.t(), &train), &m_tr, &t_tr, &config.ridge_lambdas, core)?;
        let sigma_model = fit_marginal_effect(&f_tr, &y_tr, &select(data.s(), &train), &m_tr, &s_tr, &config.ridge_lambdas, core)?;

        let m_ev = outcome.predict(&f_ev)?;
        let e_ev = prop.predict(&p_ev)?;
        let nu_ev = nu_model.predict(&f_ev)?;
        let sigma_ev = sigma_model.predict(&f_ev)?;
        for (k, &i) in eval.iter().enumerate() {
            m[i] = m_ev[k];
            e[i] = e_ev[k];
            nu[i] = nu_ev[k];
            sigma[i] = sigma_ev[k];
        }
    }
    CrossFittedNuisances::from_parts(m, e, nu, sigma, folds.fold_of().to_vec(), config.f_min)
}
