//! Repeated simulation with per-replication seeds and aggregate metrics.

use std::io::Write;

use log::warn;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::{generate, oracle_tr_estimate, Dgp, SetupSpec};
use crate::config::EstimationConfig;
use crate::error::{Error, Result};
use crate::pipeline::{run_methods, NuisanceSource};
use crate::report::{EstimateReport, Method};

pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn label_key(label: &str, n: usize, d: usize) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for b in label.bytes() {
        h = (h ^ b as u64).wrapping_mul(0x0100_0000_01b3);
    }
    splitmix64(splitmix64(h ^ n as u64) ^ d as u64)
}

/// Seed of replication `rep` for the design `(label, n, d)`. Depends only on
/// these values, so any table cell can be re-run on its own.
pub fn rep_seed(master: u64, label: &str, n: usize, d: usize, rep: usize) -> u64 {
    splitmix64(splitmix64(master ^ label_key(label, n, d)).wrapping_add(rep as u64))
}

/// Aggregates for one `(setup, n, d, method)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsRow {
    pub setup: String,
    pub n: usize,
    pub d: usize,
    pub method: Method,
    pub reps: usize,
    pub failures: usize,
    pub bias: f64,
    pub coverage: f64,
    pub rmse: f64,
    pub truth: f64,
    /// Estimates of the successful replications, in replication order.
    pub estimates: Vec<f64>,
    pub std_errs: Vec<f64>,
    pub failure_reasons: Vec<String>,
}

impl MetricsRow {
    fn aggregate(setup: &str, n: usize, d: usize, method: Method, truth: f64, outcomes: &[Result<EstimateReport>]) -> Self {
        let ok: Vec<&EstimateReport> = outcomes.iter().filter_map(|r| r.as_ref().ok()).collect();
        let failure_reasons: Vec<String> = outcomes.iter().filter_map(|r| r.as_ref().err().map(|e| e.to_string())).collect();
        let k = ok.len() as f64;
        let (bias, rmse, coverage) = if ok.is_empty() {
            (f64::NAN, f64::NAN, f64::NAN)
        } else {
            let bias = ok.iter().map(|r| r.tau_hat - truth).sum::<f64>() / k;
            let mse = ok.iter().map(|r| (r.tau_hat - truth).powi(2)).sum::<f64>() / k;
            let cov = ok.iter().filter(|r| r.covers(truth)).count() as f64 / k;
            (bias, mse.sqrt(), cov)
        };
        MetricsRow {
            setup: setup.to_string(),
            n,
            d,
            method,
            reps: outcomes.len(),
            failures: failure_reasons.len(),
            bias,
            coverage,
            rmse,
            truth,
            estimates: ok.iter().map(|r| r.tau_hat).collect(),
            std_errs: ok.iter().map(|r| r.std_err).collect(),
            failure_reasons,
        }
    }

    pub fn mse(&self) -> f64 {
        self.rmse * self.rmse
    }

    /// Sample variance of the estimates.
    pub fn variance(&self) -> f64 {
        let k = self.estimates.len() as f64;
        if k < 2.0 {
            return f64::NAN;
        }
        let mean = self.estimates.iter().sum::<f64>() / k;
        self.estimates.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (k - 1.0)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct MetricsTable {
    pub rows: Vec<MetricsRow>,
}

#[derive(Serialize)]
struct PlotPoint<'a> {
    setup: &'a str,
    n: usize,
    d: usize,
    method: Method,
    reps: usize,
    failures: usize,
    bias: f64,
    coverage: f64,
    rmse: f64,
    mse: f64,
    log_mse: f64,
    oracle_mse: Option<f64>,
    log_oracle_mse: Option<f64>,
}

impl MetricsTable {
    pub fn row(&self, setup: &str, n: usize, d: usize, method: Method) -> Option<&MetricsRow> {
        self.rows.iter().find(|r| r.setup == setup && r.n == n && r.d == d && r.method == method)
    }

    /// CSV with columns `setup,n,d,method,reps,failures,bias,coverage,rmse`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let err = |e: csv::Error| Error::Validation(format!("cannot write metrics: {e}"));
        w.write_record(["setup", "n", "d", "method", "reps", "failures", "bias", "coverage", "rmse"])
            .map_err(err)?;
        for r in &self.rows {
            w.write_record([
                r.setup.clone(),
                r.n.to_string(),
                r.d.to_string(),
                r.method.to_string(),
                r.reps.to_string(),
                r.failures.to_string(),
                r.bias.to_string(),
                r.coverage.to_string(),
                r.rmse.to_string(),
            ])
            .map_err(err)?;
        }
        w.flush().map_err(|e| Error::Io { path: "<metrics>".into(), source: e })
    }

    /// JSON array of rows with `mse`, `log_mse` and, where an `oracle_tr`
    /// row exists for the same design, the oracle's MSE.
    pub fn to_json(&self) -> String {
        let points: Vec<PlotPoint> = self
            .rows
            .iter()
            .map(|r| {
                let oracle = self.row(&r.setup, r.n, r.d, Method::OracleTr).map(|o| o.mse());
                PlotPoint {
                    setup: &r.setup,
                    n: r.n,
                    d: r.d,
                    method: r.method,
                    reps: r.reps,
                    failures: r.failures,
                    bias: r.bias,
                    coverage: r.coverage,
                    rmse: r.rmse,
                    mse: r.mse(),
                    log_mse: r.mse().ln(),
                    oracle_mse: oracle,
                    log_oracle_mse: oracle.map(f64::ln),
                }
            })
            .collect();
        serde_json::to_string_pretty(&points).expect("metrics serialize")
    }

    /// Aligned text table.
    pub fn render(&self) -> String {
        let mut out = format!(
            "{:<6} {:>6} {:>3} {:<12} {:>5} {:>5} {:>9} {:>9} {:>9}\n",
            "setup", "n", "d", "method", "reps", "fail", "bias", "coverage", "rmse"
        );
        for r in &self.rows {
            out.push_str(&format!(
                "{:<6} {:>6} {:>3} {:<12} {:>5} {:>5} {:>9.4} {:>9.3} {:>9.4}\n",
                r.setup,
                r.n,
                r.d,
                r.method.name(),
                r.reps,
                r.failures,
                r.bias,
                r.coverage,
                r.rmse
            ));
        }
        out
    }
}

fn run_rep(dgp: &dyn Dgp, n: usize, methods: &[Method], config: &EstimationConfig, seed: u64) -> Vec<Result<EstimateReport>> {
    let fail_all = |e: Error| methods.iter().map(|_| Err(e.clone())).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (data, truth) = match generate(dgp, n, &mut rng) {
        Ok(v) => v,
        Err(e) => return fail_all(e),
    };
    let fitted: Vec<Method> = methods.iter().copied().filter(|m| *m != Method::OracleTr).collect();
    let mut cfg = config.clone();
    cfg.seed = splitmix64(seed);
    let mut run = match run_methods(&data, &fitted, &cfg, NuisanceSource::CrossFit) {
        Ok(run) => run.results.into_iter().map(|(_, r)| r),
        Err(e) => return fail_all(e),
    };
    methods
        .iter()
        .map(|m| {
            if *m == Method::OracleTr {
                oracle_tr_estimate(&data, &truth)
            } else {
                run.next().expect("one result per fitted method")
            }
        })
        .collect()
}

/// Monte Carlo over any [`Dgp`]: `reps` fresh samples of size `n`, each
/// run through every method. Rows come back in `methods` order.
pub fn run_dgp_trials(
    dgp: &dyn Dgp,
    n: usize,
    methods: &[Method],
    reps: usize,
    seed: u64,
    config: &EstimationConfig,
) -> Result<Vec<MetricsRow>> {
    if reps == 0 {
        return Err(Error::Usage("reps must be at least 1".into()));
    }
    if methods.is_empty() {
        return Err(Error::Usage("no methods requested".into()));
    }
    config.validate()?;
    let label = dgp.name();
    let per_rep: Vec<Vec<Result<EstimateReport>>> = (0..reps)
        .into_par_iter()
        .map(|rep| run_rep(dgp, n, methods, config, rep_seed(seed, &label, n, dgp.d(), rep)))
        .collect();
    let rows: Vec<MetricsRow> = methods
        .iter()
        .enumerate()
        .map(|(k, &m)| {
            let outcomes: Vec<Result<EstimateReport>> = per_rep.iter().map(|r| r[k].clone()).collect();
            MetricsRow::aggregate(&label, n, dgp.d(), m, dgp.ate(), &outcomes)
        })
        .collect();
    for r in rows.iter().filter(|r| r.failures > 0) {
        warn!("{} n={} d={} {}: {} of {} replications failed ({})", r.setup, r.n, r.d, r.method, r.failures, r.reps, r.failure_reasons[0]);
    }
    Ok(rows)
}

/// Runs every setup template with every method. The templates' own seeds
/// are ignored in favor of seeds derived from `seed`.
pub fn run_trials(
    specs: &[SetupSpec],
    methods: &[Method],
    reps: usize,
    seed: u64,
    config: &EstimationConfig,
) -> Result<MetricsTable> {
    for spec in specs {
        spec.validate()?;
    }
    let mut table = MetricsTable::default();
    for spec in specs {
        table.rows.extend(run_dgp_trials(&spec.model(), spec.n, methods, reps, seed, config)?);
    }
    Ok(table)
}
