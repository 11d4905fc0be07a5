//! The estimator suite compared in the simulation.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::population::{DrawnCohorts, SimulatedPopulation, VARIABLES};
use crate::error::{Error, Result};
use crate::estimation::{estimate_prevalence, PrevalenceEstimate};
use crate::model::{expand_terms, MarginTargets, TermSet};
use crate::nps::NpsOptions;
use crate::raking::{rake, CalibrationDesign, RakingOptions};
use crate::selection::{
    calibrate_selected, fit_propensity, greedy_select, Cohorts, SelectionOptions, SelectionTrace,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Estimator {
    Naive,
    Oracle,
    Cal1,
    Nps1,
    NpsCal1,
    VsNps,
    VsRake,
    Rails,
    Nps2,
    Cal2,
    NpsCal2,
}

impl Estimator {
    pub const ALL: [Estimator; 11] = [
        Self::Naive,
        Self::Oracle,
        Self::Cal1,
        Self::Nps1,
        Self::NpsCal1,
        Self::VsNps,
        Self::VsRake,
        Self::Rails,
        Self::Nps2,
        Self::Cal2,
        Self::NpsCal2,
    ];

    /// The eight estimators reported by default.
    pub fn default_set() -> Vec<Estimator> {
        Self::ALL[..8].to_vec()
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Naive => "naive",
            Self::Oracle => "oracle",
            Self::Cal1 => "cal-1",
            Self::Nps1 => "nps-1",
            Self::NpsCal1 => "nps-cal-1",
            Self::VsNps => "vs-nps",
            Self::VsRake => "vs-rake",
            Self::Rails => "RAILS",
            Self::Nps2 => "nps-2",
            Self::Cal2 => "cal-2",
            Self::NpsCal2 => "nps-cal-2",
        }
    }
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Estimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|e| e.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown estimator `{s}`")))
    }
}

impl TryFrom<String> for Estimator {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Estimator> for String {
    fn from(e: Estimator) -> String {
        e.name().to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EstimatorOptions {
    pub nps: NpsOptions,
    pub raking: RakingOptions,
    pub selection: SelectionOptions,
    pub level: f64,
    /// Highest interaction order in the candidate pool and the margins.
    pub max_order: usize,
}

impl Default for EstimatorOptions {
    fn default() -> Self {
        EstimatorOptions {
            nps: NpsOptions::default(),
            raking: RakingOptions::default(),
            selection: SelectionOptions::default(),
            level: 0.95,
            max_order: 2,
        }
    }
}

/// Term sets and population targets shared by every replication.
#[derive(Debug, Clone)]
pub struct Design {
    pub mains: TermSet,
    /// Every term up to `max_order`.
    pub full: TermSet,
    /// `full` without the main effects.
    pub pool: TermSet,
    pub targets: MarginTargets,
}

impl Design {
    pub fn new(pop: &SimulatedPopulation, max_order: usize) -> Result<Self> {
        let mains = expand_terms(&pop.schema, &VARIABLES, 1, &[])?;
        let full = expand_terms(&pop.schema, &VARIABLES, max_order, &[])?;
        let pool = full
            .iter()
            .filter(|t| !t.is_main_effect())
            .cloned()
            .collect();
        let targets = pop.margins(&full)?;
        Ok(Design {
            mains,
            full,
            pool,
            targets,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimatorOutput {
    pub estimator: Estimator,
    /// `None` when the weights could not be built (divergent replication).
    pub estimate: Option<PrevalenceEstimate>,
    /// Failure reason, or a short diagnostic such as the LIFO removals.
    pub note: String,
}

impl EstimatorOutput {
    pub fn converged(&self) -> bool {
        self.estimate.is_some()
    }
}

fn outcome(
    estimator: Estimator,
    weights: Result<Vec<f64>>,
    y: &[f64],
    level: f64,
    note: String,
) -> EstimatorOutput {
    match weights.and_then(|w| estimate_prevalence(&w, y, level)) {
        Ok(e) => EstimatorOutput {
            estimator,
            estimate: Some(e),
            note,
        },
        Err(e) => EstimatorOutput {
            estimator,
            estimate: None,
            note: e.to_string(),
        },
    }
}

fn raked(
    base: Vec<f64>,
    cohorts: &DrawnCohorts,
    design: &Design,
    terms: &TermSet,
    opts: &RakingOptions,
) -> Result<Vec<f64>> {
    let cal = CalibrationDesign::new(&cohorts.np, &design.targets, terms)?;
    let r = rake(&base, &cal, opts)?;
    if r.converged {
        Ok(r.weights)
    } else {
        Err(Error::Numeric(format!(
            "raking did not converge in {} passes",
            r.passes
        )))
    }
}

fn propensity_weights(
    cohorts: Cohorts<'_>,
    terms: &TermSet,
    opts: &NpsOptions,
) -> Result<Vec<f64>> {
    let fit = fit_propensity(cohorts, terms, opts)?;
    if !fit.fit.converged {
        return Err(Error::Numeric("propensity fit did not converge".into()));
    }
    Ok(fit.base_weights())
}

/// Runs `estimators` on one replication.
pub fn run_estimators(
    pop: &SimulatedPopulation,
    drawn: &DrawnCohorts,
    design: &Design,
    estimators: &[Estimator],
    opts: &EstimatorOptions,
) -> Result<Vec<EstimatorOutput>> {
    let cohorts = Cohorts::new(&drawn.np, &drawn.p)?;
    let y = drawn.np.outcome().expect("drawn cohorts carry outcomes");
    let n = drawn.np.n_rows();
    let level = opts.level;
    let mut selection: Option<Result<SelectionTrace>> = None;
    let mut select = || -> Result<SelectionTrace> {
        selection
            .get_or_insert_with(|| {
                greedy_select(
                    cohorts,
                    &design.mains,
                    &design.pool,
                    &opts.nps,
                    &opts.selection,
                )
            })
            .as_ref()
            .map(Clone::clone)
            .map_err(|e| Error::Numeric(e.to_string()))
    };
    let mut out = Vec::with_capacity(estimators.len());
    for &est in estimators {
        let mut note = String::new();
        let weights = match est {
            Estimator::Naive => Ok(vec![1.0; n]),
            Estimator::Oracle => Ok(drawn.np_rows.iter().map(|&r| 1.0 / pop.pi_np[r]).collect()),
            Estimator::Cal1 => raked(vec![1.0; n], drawn, design, &design.mains, &opts.raking),
            Estimator::Nps1 => propensity_weights(cohorts, &design.mains, &opts.nps),
            Estimator::NpsCal1 => propensity_weights(cohorts, &design.mains, &opts.nps)
                .and_then(|b| raked(b, drawn, design, &design.mains, &opts.raking)),
            Estimator::Nps2 => propensity_weights(cohorts, &design.full, &opts.nps),
            Estimator::Cal2 => raked(vec![1.0; n], drawn, design, &design.full, &opts.raking),
            Estimator::NpsCal2 => propensity_weights(cohorts, &design.full, &opts.nps)
                .and_then(|b| raked(b, drawn, design, &design.full, &opts.raking)),
            Estimator::VsNps => select().and_then(|t| {
                note = t
                    .added_terms()
                    .iter()
                    .map(ToString::to_string)
                    .collect::<Vec<_>>()
                    .join(";");
                propensity_weights(cohorts, &t.final_working_set, &opts.nps)
            }),
            Estimator::VsRake | Estimator::Rails => select().and_then(|t| {
                let sel = SelectionOptions {
                    lifo: est == Estimator::Rails,
                    ..opts.selection.clone()
                };
                let r = calibrate_selected(
                    cohorts,
                    &design.targets,
                    &design.mains,
                    t,
                    &opts.nps,
                    &opts.raking,
                    &sel,
                )?;
                note = r
                    .removed_by_lifo
                    .iter()
                    .map(ToString::to_string)
                    .collect::<Vec<_>>()
                    .join(";");
                if r.converged {
                    Ok(r.weights)
                } else {
                    Err(Error::Numeric(
                        r.attempts
                            .last()
                            .and_then(|a| a.failure.clone())
                            .unwrap_or_default(),
                    ))
                }
            }),
        };
        out.push(outcome(est, weights, y, level, note));
    }
    Ok(out)
}
