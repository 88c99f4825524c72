//! Runs a list of estimators on one dataset, sharing the fitted nuisances,
//! the heterogeneous effect and the balancing weights between them.

use log::debug;

use crate::balancing::{amle_estimate, build_qp, estimate_sigma2, solve_qp, BalancingWeights};
use crate::basis::Standardizer;
use crate::config::EstimationConfig;
use crate::data::{make_folds, Dataset, FoldAssignment};
use crate::error::{Error, Result};
use crate::estimators::{
    aipw_estimate, g_hat, hte_from_coefficients, hte_report, ipw_estimate, ols_baseline, sample_means, tr_from_coefficients,
    HteFit,
};
use crate::nuisance::{crossfit_nuisances, fit_ridge, learner_matrix, CrossFittedNuisances, LearnerFeatures};
use crate::orthogonal::{coefficients, OrthoCoefficients};
use crate::report::{EstimateReport, Method};

/// Where the nuisance values come from.
#[derive(Debug, Clone, Copy)]
pub enum NuisanceSource<'a> {
    /// Cross-fit on `k_folds` stratified folds.
    CrossFit,
    /// Known nuisance functions evaluated at every observation; no folds.
    Known(&'a CrossFittedNuisances),
}

/// Output of [`run_methods`]: one result per requested method, in order.
#[derive(Debug, Clone)]
pub struct PipelineRun {
    pub results: Vec<(Method, Result<EstimateReport>)>,
    pub weights: Option<BalancingWeights>,
}

impl PipelineRun {
    /// Reports of the methods that succeeded.
    pub fn reports(&self) -> impl Iterator<Item = &EstimateReport> {
        self.results.iter().filter_map(|(_, r)| r.as_ref().ok())
    }

    /// The first failure, if any.
    pub fn first_error(&self) -> Option<&Error> {
        self.results.iter().find_map(|(_, r)| r.as_ref().err())
    }
}

struct Fitted {
    nuis: CrossFittedNuisances,
    folds: FoldAssignment,
    coef: OrthoCoefficients<f64>,
    features: LearnerFeatures,
    z: nalgebra::DMatrix<f64>,
}

fn fit_stage(data: &Dataset, config: &EstimationConfig, source: NuisanceSource) -> Result<Fitted> {
    let z = Standardizer::fit(data.x()).apply(data.x());
    let features = LearnerFeatures::build(data, config)?;
    let (nuis, folds) = match source {
        NuisanceSource::CrossFit => {
            let folds = make_folds(data.n(), config.k_folds, config.seed, &data.cells())?;
            (crossfit_nuisances(data, &folds, &features, config)?, folds)
        }
        NuisanceSource::Known(n) => {
            if n.len() != data.n() {
                return Err(Error::Shape { expected: data.n(), got: n.len() });
            }
            (n.clone(), FoldAssignment::single(data.n()))
        }
    };
    let coef = coefficients(data, &nuis)?;
    Ok(Fitted { nuis, folds, coef, features, z })
}

fn amle_stage(data: &Dataset, config: &EstimationConfig, fit: &Fitted, hte: &HteFit) -> Result<(EstimateReport, BalancingWeights)> {
    let g = g_hat(&fit.nuis, &fit.coef, &hte.tau_hat)?;
    let sigma2 = estimate_sigma2(data.y(), &g, config.sigma2_override)?;
    // The balancing class carries the additive block only when the
    // full-sample outcome fit keeps it.
    let core = fit.features.outcome_core;
    let outcome = fit_ridge(&fit.features.outcome, data.y(), &config.ridge_lambdas, core)?;
    let additive = if outcome.coefficients[core..].iter().any(|c| *c != 0.0) { config.additive_max_order } else { 0 };
    let f = learner_matrix(&fit.z, config.amle_order(data.d()), additive)?;
    let qp = build_qp(&f, data.s(), data.t(), sigma2)?;
    let weights = solve_qp(&qp, config.qp_tol, config.qp_max_iter)?;
    debug!("balancing weights: {} iterations, KKT residual {:.2e}", weights.solver_iterations, weights.kkt_residual);
    let report = amle_estimate(data, &fit.nuis, &fit.coef, &hte.tau_hat, &weights)?
        .diagnostic("sigma2", sigma2)
        .diagnostic("additive_order", additive as f64);
    Ok((report, weights))
}

/// Runs `methods` on `data`. Stages shared by several methods run once; a
/// failing stage fails every method that depends on it.
///
/// `Method::OracleTr` is only available with [`NuisanceSource::Known`].
pub fn run_methods(data: &Dataset, methods: &[Method], config: &EstimationConfig, source: NuisanceSource) -> Result<PipelineRun> {
    config.validate()?;
    data.validate()?;
    let needs_fit = methods.iter().any(|m| m.needs_nuisances() || *m == Method::OracleTr);
    let fit = needs_fit.then(|| fit_stage(data, config, source));
    let needs_hte = methods.iter().any(|m| m.needs_hte());
    let hte = match (&fit, needs_hte) {
        (Some(Ok(f)), true) => Some(hte_from_coefficients(&f.coef, &f.folds, &f.features.outcome, &config.ridge_lambdas, f.features.outcome_core)),
        (Some(Err(e)), true) => Some(Err(e.clone())),
        _ => None,
    };
    let mut weights = None;
    let mut results = Vec::with_capacity(methods.len());
    for &method in methods {
        let with_fit = |f: &dyn Fn(&Fitted) -> Result<EstimateReport>| match &fit {
            Some(Ok(fit)) => f(fit),
            Some(Err(e)) => Err(e.clone()),
            None => unreachable!("nuisance stage runs for every nuisance-based method"),
        };
        let with_hte = |f: &dyn Fn(&Fitted, &HteFit) -> Result<EstimateReport>| match (&fit, &hte) {
            (Some(Ok(fit)), Some(Ok(h))) => f(fit, h),
            (Some(Err(e)), _) | (_, Some(Err(e))) => Err(e.clone()),
            _ => unreachable!("effect stage runs for every method that needs it"),
        };
        let result = match method {
            Method::SampleMeans => sample_means(data),
            Method::Ols => ols_baseline(data),
            Method::Tr => with_fit(&|f| {
                tr_from_coefficients(&f.coef, &f.folds, Method::Tr).map(|r| r.diagnostic("delta_clipped", f.nuis.delta_clipped as f64))
            }),
            Method::OracleTr => match source {
                NuisanceSource::Known(_) => with_fit(&|f| tr_from_coefficients(&f.coef, &f.folds, Method::OracleTr)),
                NuisanceSource::CrossFit => Err(Error::Usage("oracle_tr needs the true nuisance functions".into())),
            },
            Method::Hte => with_hte(&|_, h| Ok(hte_report(h))),
            Method::Aipw => with_hte(&|f, h| aipw_estimate(data, &f.nuis, &f.coef, &h.tau_hat)),
            Method::Ipw => with_fit(&|f| ipw_estimate(data, &f.nuis)),
            Method::Amle => match (&fit, &hte) {
                (Some(Ok(f)), Some(Ok(h))) => amle_stage(data, config, f, h).map(|(r, w)| {
                    weights = Some(w);
                    r
                }),
                (Some(Err(e)), _) | (_, Some(Err(e))) => Err(e.clone()),
                _ => unreachable!("effect stage runs for amle"),
            },
        };
        results.push((method, result));
    }
    Ok(PipelineRun { results, weights })
}
