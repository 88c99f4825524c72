use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::Error;

/// Nominal coverage of reported confidence intervals.
pub const DEFAULT_LEVEL: f64 = 0.95;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    SampleMeans,
    Ols,
    Tr,
    Hte,
    Aipw,
    Ipw,
    Amle,
    OracleTr,
}

impl Method {
    pub const ALL: [Method; 8] = [
        Method::SampleMeans,
        Method::Ols,
        Method::Tr,
        Method::Hte,
        Method::Aipw,
        Method::Ipw,
        Method::Amle,
        Method::OracleTr,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::SampleMeans => "sample_means",
            Method::Ols => "ols",
            Method::Tr => "tr",
            Method::Hte => "hte",
            Method::Aipw => "aipw",
            Method::Ipw => "ipw",
            Method::Amle => "amle",
            Method::OracleTr => "oracle_tr",
        }
    }

    /// Whether the method needs cross-fitted nuisances.
    pub fn needs_nuisances(self) -> bool {
        matches!(self, Method::Tr | Method::Hte | Method::Aipw | Method::Ipw | Method::Amle)
    }

    /// Whether the method needs the cross-fitted heterogeneous effect.
    pub fn needs_hte(self) -> bool {
        matches!(self, Method::Hte | Method::Aipw | Method::Amle)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        let key = s.trim().to_ascii_lowercase().replace('-', "_");
        Method::ALL
            .into_iter()
            .find(|m| m.name() == key || (key == "means" && *m == Method::SampleMeans))
            .ok_or_else(|| {
                let known: Vec<_> = Method::ALL.iter().map(|m| m.name()).collect();
                Error::Usage(format!("unknown method `{s}` (known: {})", known.join(", ")))
            })
    }
}

/// Parses a comma-separated method list.
pub fn parse_methods(list: &str) -> Result<Vec<Method>, Error> {
    list.split(',').filter(|s| !s.trim().is_empty()).map(str::parse).collect()
}

/// Two-sided standard normal quantile for the given nominal level.
pub fn z_value(level: f64) -> f64 {
    Normal::new(0.0, 1.0).expect("standard normal").inverse_cdf(0.5 + level / 2.0)
}

/// Point estimate with a normal-approximation confidence interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub method: Method,
    pub tau_hat: f64,
    pub std_err: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n_used: usize,
    pub diagnostics: BTreeMap<String, f64>,
}

impl EstimateReport {
    pub fn new(method: Method, tau_hat: f64, std_err: f64, n_used: usize) -> Self {
        Self::with_level(method, tau_hat, std_err, n_used, DEFAULT_LEVEL)
    }

    pub fn with_level(method: Method, tau_hat: f64, std_err: f64, n_used: usize, level: f64) -> Self {
        let std_err = std_err.max(0.0);
        let half = z_value(level) * std_err;
        EstimateReport {
            method,
            tau_hat,
            std_err,
            ci_low: tau_hat - half,
            ci_high: tau_hat + half,
            n_used,
            diagnostics: BTreeMap::new(),
        }
    }

    pub fn diagnostic(mut self, key: &str, value: f64) -> Self {
        self.diagnostics.insert(key.to_string(), value);
        self
    }

    pub fn covers(&self, value: f64) -> bool {
        self.ci_low <= value && value <= self.ci_high
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }
}
