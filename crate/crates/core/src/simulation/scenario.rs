//! Scenario specifications.
//!
//! Coefficient vectors are indexed as in the generating models: entry 0 is
//! the intercept, 1 and 2 multiply `x1` and `x2`, 3..=5 the indicators
//! `I(x3 = j)`, 6 and 7 the two interactions, 8..=10 the indicators
//! `I(x4 = j)` and 11 multiplies `x5`. Intercepts are always re-tuned when the
//! population is generated, so entry 0 only serves as a starting point.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const N_COEF: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ScenarioName {
    S1,
    S2,
    S3,
    S4,
    S5,
}

impl ScenarioName {
    pub const ALL: [ScenarioName; 5] = [Self::S1, Self::S2, Self::S3, Self::S4, Self::S5];

    /// Coefficient indices forced to zero in the outcome (`alpha`) and
    /// probability-sample (`gamma`) models.
    pub fn zero_pattern(self) -> (&'static [usize], &'static [usize]) {
        const INTER_ADDON: &[usize] = &[6, 7, 8, 9, 10, 11];
        const INTER: &[usize] = &[6, 7];
        const ADDON: &[usize] = &[8, 9, 10, 11];
        match self {
            Self::S1 => (INTER_ADDON, INTER_ADDON),
            Self::S2 => (INTER, INTER),
            Self::S3 => (ADDON, INTER_ADDON),
            Self::S4 => (&[], INTER_ADDON),
            Self::S5 => (&[], &[]),
        }
    }

    /// The bundled default configuration.
    pub fn default_config(self) -> &'static str {
        match self {
            Self::S1 => include_str!("../../scenarios/s1.toml"),
            Self::S2 => include_str!("../../scenarios/s2.toml"),
            Self::S3 => include_str!("../../scenarios/s3.toml"),
            Self::S4 => include_str!("../../scenarios/s4.toml"),
            Self::S5 => include_str!("../../scenarios/s5.toml"),
        }
    }
}

impl fmt::Display for ScenarioName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

impl FromStr for ScenarioName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "S1" => Ok(Self::S1),
            "S2" => Ok(Self::S2),
            "S3" => Ok(Self::S3),
            "S4" => Ok(Self::S4),
            "S5" => Ok(Self::S5),
            _ => Err(Error::Config(format!(
                "unknown scenario `{s}` (expected S1..S5)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sizes {
    pub population: usize,
    pub np: usize,
    pub p: usize,
}

impl Sizes {
    pub fn desk() -> Self {
        Sizes {
            population: 200_000,
            np: 2_000,
            p: 400,
        }
    }

    pub fn full() -> Self {
        Sizes {
            population: 3_340_000,
            np: 35_000,
            p: 5_500,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bins {
    pub x1: usize,
    pub x3: usize,
}

impl Default for Bins {
    fn default() -> Self {
        Bins { x1: 4, x3: 4 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub name: ScenarioName,
    pub seed: u64,
    pub alpha: [f64; N_COEF],
    pub beta: [f64; N_COEF],
    pub gamma: [f64; N_COEF],
    pub sizes: Sizes,
    #[serde(default)]
    pub bins: Bins,
    /// Outcome prevalence range; the outcome intercept targets its midpoint.
    pub prevalence_range: [f64; 2],
}

impl ScenarioSpec {
    pub fn builtin(name: ScenarioName) -> Self {
        Self::from_toml(name.default_config()).expect("bundled scenario configs are valid")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: ScenarioSpec = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario specs serialize")
    }

    /// Checks the scenario zero pattern, sizes, bins and the prevalence range.
    pub fn validate(&self) -> Result<()> {
        let (alpha_zero, gamma_zero) = self.name.zero_pattern();
        for (label, coef, zero) in [
            ("alpha", &self.alpha, alpha_zero),
            ("gamma", &self.gamma, gamma_zero),
        ] {
            if let Some(&j) = zero.iter().find(|&&j| coef[j] != 0.0) {
                return Err(Error::Config(format!(
                    "{}: {label}[{j}] = {} but must be 0 in this scenario",
                    self.name, coef[j]
                )));
            }
        }
        for (label, coef) in [
            ("alpha", &self.alpha),
            ("beta", &self.beta),
            ("gamma", &self.gamma),
        ] {
            if coef.iter().any(|c| !c.is_finite()) {
                return Err(Error::Config(format!(
                    "{}: {label} has a non-finite entry",
                    self.name
                )));
            }
        }
        let s = self.sizes;
        if !(s.np > 0 && s.p > 0 && s.np < s.population && s.p < s.population) {
            return Err(Error::Config(format!(
                "sizes must satisfy 0 < np, p < population (got {}, {}, {})",
                s.np, s.p, s.population
            )));
        }
        if self.bins.x1 < 2 || self.bins.x3 < 2 {
            return Err(Error::Config("x1 and x3 need at least 2 bins".into()));
        }
        let [lo, hi] = self.prevalence_range;
        if !(0.0 < lo && lo <= hi && hi < 1.0) {
            return Err(Error::Config(format!(
                "prevalence range [{lo}, {hi}] must lie inside (0, 1)"
            )));
        }
        Ok(())
    }

    pub fn with_sizes(mut self, sizes: Sizes) -> Self {
        self.sizes = sizes;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}
