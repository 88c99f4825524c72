//! The six benchmark designs. All draw `X ~ N(0, I_d)` and unit-variance
//! Gaussian noise.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{generate, Dgp, GroundTruth};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::estimators::{standard_normals, TruthModel};

/// Overlap floor used by the propensity formulas of setups B, E and F.
pub const ETA: f64 = 0.1;

/// Overlap parameter of setup C: `e11 = 1/2 + (1 − 6η)/2 · sin(3x₁)` with the
/// other three cells equal. At this value the treated cell is least likely
/// where the baseline is high, which biases the unadjusted estimators down.
pub const ETA_C: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Setup {
    A,
    B,
    C,
    D,
    E,
    F,
}

impl Setup {
    pub const ALL: [Setup; 6] = [Setup::A, Setup::B, Setup::C, Setup::D, Setup::E, Setup::F];

    /// Smallest covariate dimension the formulas reference.
    pub fn required_d(self) -> usize {
        match self {
            Setup::C => 1,
            _ => 5,
        }
    }

    pub fn ate(self) -> f64 {
        match self {
            Setup::A | Setup::B | Setup::C => 1.0,
            Setup::D | Setup::E => 2.0,
            Setup::F => 0.0,
        }
    }

    /// The model in dimension `d` (unchecked; see [`SetupSpec::validate`]).
    pub fn with_d(self, d: usize) -> SetupModel {
        SetupModel { setup: self, d }
    }
}

impl fmt::Display for Setup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

impl FromStr for Setup {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "A" => Ok(Setup::A),
            "B" => Ok(Setup::B),
            "C" => Ok(Setup::C),
            "D" => Ok(Setup::D),
            "E" => Ok(Setup::E),
            "F" => Ok(Setup::F),
            _ => Err(Error::Usage(format!("unknown setup `{s}`; valid setups: A, B, C, D, E, F"))),
        }
    }
}

fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

fn softplus(v: f64) -> f64 {
    if v > 30.0 {
        v
    } else {
        v.exp().ln_1p()
    }
}

/// Cells from independent marginals `s` and `t`.
fn independent(s: f64, t: f64) -> [f64; 4] {
    [(1.0 - s) * (1.0 - t), (1.0 - s) * t, s * (1.0 - t), s * t]
}

/// Sequential construction shared by setups B and E: `e11`, then `e01`,
/// then `e10`, with `e00` the remainder.
fn sequential_cells(x: &[f64]) -> [f64; 4] {
    let e11 = ETA.max(0.7 * sigmoid(x[2]));
    let e01 = ETA.max((0.8 - e11) * sigmoid(x[3]));
    let e10 = ETA.max((0.9 - e11 - e01) * sigmoid(x[4]));
    let e00 = 1.0 - e11 - e01 - e10;
    let mut cells = [e00, e01, e10, e11];
    if e00 < ETA {
        // Guard: pin the remainder and renormalize.
        cells[0] = ETA;
        let total: f64 = cells.iter().sum();
        for c in cells.iter_mut() {
            *c /= total;
        }
    }
    cells
}

/// One setup in a fixed dimension.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SetupModel {
    pub setup: Setup,
    pub d: usize,
}

impl SetupModel {
    /// `(b, ξ, ρ, τ)` at `x`.
    pub fn components(&self, x: &[f64]) -> (f64, f64, f64, f64) {
        match self.setup {
            Setup::A => ((x[0] + x[1]).max(0.0), x[3], x[2], 1.0),
            Setup::B => (
                (x[0] + x[1]).max(0.0),
                softplus(-x[3] - x[4]),
                2.0 * softplus(x[0] + x[1] + x[2]),
                1.0,
            ),
            Setup::C => (2.0 * (3.0 * x[0]).sin(), 0.0, 0.0, 1.0),
            Setup::D => (
                0.0,
                0.0,
                5.0 * ((PI * x[0] * x[1]).sin() + 2.0 * (x[2] - 0.5).powi(2) + x[3] + 0.5 * x[4]),
                2.0,
            ),
            Setup::E => (
                2.0 * softplus(x[0] + x[1] + x[2]) + (PI * x[0] * x[1]).sin(),
                softplus(-x[3] - x[4]),
                2.0 * softplus(x[0] + x[1] + x[2]),
                (x[0] + x[1]).powi(2),
            ),
            Setup::F => (
                (x[0] + x[1]).max(0.0),
                sigmoid(-x[3]),
                sigmoid(-x[2]),
                (2.0 * PI * x[0]).sin() + x[3] + 0.5 * x[4],
            ),
        }
    }
}

impl TruthModel for SetupModel {
    fn d(&self) -> usize {
        self.d
    }

    fn draw_x(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        standard_normals(rng, self.d)
    }

    fn cells(&self, x: &[f64]) -> Result<[f64; 4]> {
        Ok(match self.setup {
            Setup::A => independent(0.4, 0.4),
            Setup::B | Setup::E => sequential_cells(x),
            Setup::C => {
                let e11 = 0.5 + 0.5 * (1.0 - 6.0 * ETA_C) * (3.0 * x[0]).sin();
                let rest = (1.0 - e11) / 3.0;
                [rest, rest, rest, e11]
            }
            Setup::D => independent(0.5, 0.5),
            Setup::F => independent(sigmoid(0.5 * x[2] - x[4]).clamp(ETA, 1.0 - ETA), 0.45),
        })
    }

    fn tau(&self, x: &[f64]) -> f64 {
        self.components(x).3
    }
}

impl Dgp for SetupModel {
    fn name(&self) -> String {
        self.setup.to_string()
    }

    fn outcome_cells(&self, x: &[f64]) -> [f64; 4] {
        let (b, xi, rho, tau) = self.components(x);
        [b, b + rho, b + xi, b + xi + rho + tau]
    }

    fn ate(&self) -> f64 {
        self.setup.ate()
    }
}

/// A setup with sample size, dimension and seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SetupSpec {
    pub setup: Setup,
    pub n: usize,
    pub d: usize,
    pub seed: u64,
}

impl SetupSpec {
    pub fn new(setup: Setup, n: usize, d: usize, seed: u64) -> Self {
        SetupSpec { setup, n, d, seed }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d < self.setup.required_d() {
            return Err(Error::Usage(format!(
                "setup {} needs d ≥ {}, got {}",
                self.setup,
                self.setup.required_d(),
                self.d
            )));
        }
        if self.n == 0 {
            return Err(Error::Usage("n must be positive".into()));
        }
        Ok(())
    }

    pub fn model(&self) -> SetupModel {
        self.setup.with_d(self.d)
    }

    /// Draws the sample with a generator seeded from `seed`.
    pub fn generate(&self) -> Result<(Dataset, GroundTruth)> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        generate(&self.model(), self.n, &mut rng)
    }
}

/// Draws a sample from `spec`. Alias of [`SetupSpec::generate`].
pub fn gen_setup(spec: &SetupSpec) -> Result<(Dataset, GroundTruth)> {
    spec.generate()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_requirements() {
        assert_eq!("c".parse::<Setup>().unwrap(), Setup::C);
        let err = "Z".parse::<Setup>().unwrap_err().to_string();
        assert!(err.contains("A, B, C, D, E, F"));
        assert!(SetupSpec::new(Setup::A, 10, 4, 0).validate().is_err());
        assert!(SetupSpec::new(Setup::C, 10, 1, 0).validate().is_ok());
    }

    #[test]
    fn cells_are_valid_on_a_grid() {
        for setup in Setup::ALL {
            let m = setup.with_d(6);
            for k in 0..500 {
                let x: Vec<f64> = (0..6).map(|j| ((k * (j + 3) * 7919) % 1000) as f64 / 125.0 - 4.0).collect();
                let c = m.cells(&x).unwrap();
                super::super::check_cells(&c).unwrap();
            }
        }
    }

    #[test]
    fn sequential_cells_never_need_the_guard() {
        for k in 0..2000 {
            let x: Vec<f64> = (0..5).map(|j| ((k * (j + 1) * 104729) % 2000) as f64 / 200.0 - 5.0).collect();
            assert!(sequential_cells(&x)[0] >= ETA - 1e-12);
        }
    }

    #[test]
    fn effect_is_the_double_difference() {
        let m = Setup::E.with_d(5);
        let x = [0.3, -1.2, 0.5, 0.1, 2.0];
        let g = m.outcome_cells(&x);
        assert!((g[3] - g[2] - g[1] + g[0] - m.tau(&x)).abs() < 1e-12);
    }
}
