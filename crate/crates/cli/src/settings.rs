//! Resolution of flags, config file and defaults into one setting set.

use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{Map, Value};

use crate::args::{CommonArgs, EstimateArgs, Format, SimulateArgs, TuningArgs};
use nddid::report::parse_methods;
use nddid::simulation::Setup;
use nddid::{EstimationConfig, Error, Method, Result};

const RUN_KEYS: [&str; 14] = [
    "methods",
    "out",
    "format",
    "setup",
    "n",
    "d",
    "reps",
    "input",
    "outcome_col",
    "state_col",
    "time_col",
    "covariate_cols",
    "filter",
    "weights_out",
];

/// Methods run when none are requested.
const DEFAULT_METHODS: [Method; 7] = [
    Method::SampleMeans,
    Method::Ols,
    Method::Tr,
    Method::Hte,
    Method::Aipw,
    Method::Ipw,
    Method::Amle,
];

/// Config file split into run keys and estimation keys.
#[derive(Debug, Default)]
struct FileConfig {
    run: Map<String, Value>,
    estimation: EstimationConfig,
}

fn usage(msg: String) -> Error {
    Error::Usage(msg)
}

fn load_file(path: Option<&Path>) -> Result<FileConfig> {
    let Some(path) = path else {
        return Ok(FileConfig::default());
    };
    let text = std::fs::read_to_string(path).map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
    let value: Value = if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(&text).map_err(|e| usage(format!("invalid JSON config {}: {e}", path.display())))?
    } else {
        let table: toml::Table = toml::from_str(&text).map_err(|e| usage(format!("invalid TOML config {}: {e}", path.display())))?;
        serde_json::to_value(table).map_err(|e| usage(e.to_string()))?
    };
    let Value::Object(mut all) = value else {
        return Err(usage("config file must hold a table of settings".into()));
    };
    let mut run = Map::new();
    for key in RUN_KEYS {
        if let Some(v) = all.remove(key) {
            run.insert(key.to_string(), v);
        }
    }
    let estimation = serde_json::from_value(Value::Object(all)).map_err(|e| usage(format!("config {}: {e}", path.display())))?;
    Ok(FileConfig { run, estimation })
}

/// A string list given either as `"a,b"` or as an array.
fn list(v: &Value) -> Result<Vec<String>> {
    match v {
        Value::String(s) => Ok(s.split(',').map(|p| p.trim().to_string()).filter(|p| !p.is_empty()).collect()),
        Value::Number(n) => Ok(vec![n.to_string()]),
        Value::Array(items) => items
            .iter()
            .map(|i| match i {
                Value::String(s) => Ok(s.clone()),
                Value::Number(n) => Ok(n.to_string()),
                other => Err(usage(format!("unexpected list entry {other}"))),
            })
            .collect(),
        other => Err(usage(format!("expected a list, got {other}"))),
    }
}

fn split(s: &str) -> Vec<String> {
    list(&Value::String(s.to_string())).expect("string lists always parse")
}

fn string(file: &FileConfig, key: &str) -> Result<Option<String>> {
    match file.run.get(key) {
        None => Ok(None),
        Some(Value::String(s)) => Ok(Some(s.clone())),
        Some(other) => Err(usage(format!("`{key}` must be a string, got {other}"))),
    }
}

fn count(file: &FileConfig, key: &str) -> Result<Option<usize>> {
    match file.run.get(key) {
        None => Ok(None),
        Some(v) => v
            .as_u64()
            .map(|n| Some(n as usize))
            .ok_or_else(|| usage(format!("`{key}` must be a nonnegative integer, got {v}"))),
    }
}

fn strings(file: &FileConfig, key: &str) -> Result<Option<Vec<String>>> {
    file.run.get(key).map(list).transpose()
}

fn apply_tuning(mut cfg: EstimationConfig, t: &TuningArgs, seed: Option<u64>) -> Result<EstimationConfig> {
    if let Some(v) = t.k_folds {
        cfg.k_folds = v;
    }
    if let Some(v) = t.basis_max_order {
        cfg.basis_max_order = Some(v);
    }
    if let Some(v) = t.propensity_max_order {
        cfg.propensity_max_order = Some(v);
    }
    if let Some(v) = t.amle_basis_max_order {
        cfg.amle_basis_max_order = Some(v);
    }
    if let Some(v) = t.additive_max_order {
        cfg.additive_max_order = v;
    }
    if let Some(v) = t.propensity_additive_max_order {
        cfg.propensity_additive_max_order = v;
    }
    if let Some(v) = &t.ridge_lambdas {
        cfg.ridge_lambdas = split(v)
            .iter()
            .map(|s| s.parse::<f64>().map_err(|_| usage(format!("ridge penalty `{s}` is not a number"))))
            .collect::<Result<_>>()?;
    }
    if let Some(v) = t.propensity_penalty {
        cfg.propensity_penalty = v;
    }
    if let Some(v) = t.eta_clip {
        cfg.eta_clip = v;
    }
    if let Some(v) = t.f_min {
        cfg.f_min = v;
    }
    if let Some(v) = t.qp_tol {
        cfg.qp_tol = v;
    }
    if let Some(v) = t.qp_max_iter {
        cfg.qp_max_iter = v;
    }
    if let Some(v) = t.sigma2_override {
        cfg.sigma2_override = Some(v);
    }
    if let Some(v) = seed {
        cfg.seed = v;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn parse_format(file: &FileConfig, flag: Option<Format>) -> Result<Format> {
    if let Some(f) = flag {
        return Ok(f);
    }
    match string(file, "format")?.as_deref() {
        None | Some("json") => Ok(Format::Json),
        Some("csv") => Ok(Format::Csv),
        Some(other) => Err(usage(format!("unknown format `{other}`; expected csv or json"))),
    }
}

fn resolve_methods(file: &FileConfig, flag: &Option<String>) -> Result<Vec<Method>> {
    let names = match flag {
        Some(s) => split(s),
        None => match strings(file, "methods")? {
            Some(v) => v,
            None => return Ok(DEFAULT_METHODS.to_vec()),
        },
    };
    let methods = parse_methods(&names.join(","))?;
    if methods.is_empty() {
        return Err(usage("no methods requested".into()));
    }
    Ok(methods)
}

/// Settings shared by every command.
#[derive(Debug, Clone, Serialize)]
pub struct Shared {
    pub methods: Vec<Method>,
    pub out: Option<PathBuf>,
    pub format: Format,
    pub estimation: EstimationConfig,
}

fn resolve_shared(common: &CommonArgs, file: &FileConfig) -> Result<Shared> {
    let out = match &common.out {
        Some(p) => Some(p.clone()),
        None => string(file, "out")?.map(PathBuf::from),
    };
    Ok(Shared {
        methods: resolve_methods(file, &common.methods)?,
        out,
        format: parse_format(file, common.format)?,
        estimation: apply_tuning(file.estimation.clone(), &common.tuning, common.seed)?,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulateSettings {
    pub command: &'static str,
    pub setups: Vec<Setup>,
    pub n: Vec<usize>,
    pub d: usize,
    pub reps: usize,
    #[serde(flatten)]
    pub shared: Shared,
}

pub fn resolve_simulate(a: &SimulateArgs) -> Result<SimulateSettings> {
    let file = load_file(a.common.config.as_deref())?;
    let shared = resolve_shared(&a.common, &file)?;
    let setup_names = match &a.setup {
        Some(s) => split(s),
        None => strings(&file, "setup")?.ok_or_else(|| usage("simulate needs --setup (one or more of A, B, C, D, E, F)".into()))?,
    };
    let setups = setup_names.iter().map(|s| s.parse::<Setup>()).collect::<Result<Vec<_>>>()?;
    let n_values = match &a.n {
        Some(s) => split(s),
        None => strings(&file, "n")?.unwrap_or_else(|| vec!["1000".into()]),
    };
    let n = n_values
        .iter()
        .map(|s| s.parse::<usize>().map_err(|_| usage(format!("sample size `{s}` is not a positive integer"))))
        .collect::<Result<Vec<_>>>()?;
    let d = match a.d {
        Some(d) => d,
        None => count(&file, "d")?.unwrap_or(6),
    };
    let reps = match a.reps {
        Some(r) => r,
        None => count(&file, "reps")?.unwrap_or(100),
    };
    if reps == 0 {
        return Err(usage("--reps must be at least 1".into()));
    }
    for s in &setups {
        if d < s.required_d() {
            return Err(usage(format!("setup {s} needs --d ≥ {}, got {d}", s.required_d())));
        }
    }
    if setups.is_empty() || n.is_empty() || n.contains(&0) {
        return Err(usage("need at least one setup and positive sample sizes".into()));
    }
    Ok(SimulateSettings { command: "simulate", setups, n, d, reps, shared })
}

#[derive(Debug, Clone, Serialize)]
pub struct EstimateSettings {
    pub command: &'static str,
    pub input: PathBuf,
    pub outcome_col: String,
    pub state_col: String,
    pub time_col: String,
    /// `None` means every column not used otherwise.
    pub covariate_cols: Option<Vec<String>>,
    pub filter: Vec<String>,
    pub weights_out: Option<PathBuf>,
    #[serde(flatten)]
    pub shared: Shared,
}

pub fn resolve_estimate(a: &EstimateArgs, placebo: bool) -> Result<EstimateSettings> {
    let file = load_file(a.common.config.as_deref())?;
    let shared = resolve_shared(&a.common, &file)?;
    let pick = |flag: &Option<String>, key: &str, default: &str| -> Result<String> {
        Ok(match flag {
            Some(v) => v.clone(),
            None => string(&file, key)?.unwrap_or_else(|| default.to_string()),
        })
    };
    let input = match &a.input {
        Some(p) => p.clone(),
        None => string(&file, "input")?
            .map(PathBuf::from)
            .ok_or_else(|| usage("--input is required".into()))?,
    };
    let covariate_cols = match &a.covariate_cols {
        Some(s) => Some(split(s)),
        None => strings(&file, "covariate_cols")?,
    };
    let filter = if a.filter.is_empty() { strings(&file, "filter")?.unwrap_or_default() } else { a.filter.clone() };
    let weights_out = match &a.weights_out {
        Some(p) => Some(p.clone()),
        None => string(&file, "weights_out")?.map(PathBuf::from),
    };
    if shared.methods.contains(&Method::OracleTr) {
        return Err(usage("oracle_tr is only available in simulate".into()));
    }
    Ok(EstimateSettings {
        command: if placebo { "placebo" } else { "estimate" },
        input,
        outcome_col: pick(&a.outcome_col, "outcome_col", "y")?,
        state_col: pick(&a.state_col, "state_col", "s")?,
        time_col: pick(&a.time_col, "time_col", "t")?,
        covariate_cols,
        filter,
        weights_out,
        shared,
    })
}
