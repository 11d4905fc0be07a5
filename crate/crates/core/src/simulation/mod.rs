//! Monte-Carlo comparison of weighting estimators.
//!
//! A run generates one finite population from a [`ScenarioSpec`], computes its
//! margins, and then, for every replication, redraws both cohorts by Poisson
//! sampling and evaluates the estimator suite. Replications run in parallel
//! with seeds derived from the scenario seed, and are folded back in index
//! order, so a run is reproducible regardless of thread count.

pub mod estimators;
pub mod metrics;
pub mod population;
pub mod scenario;

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use estimators::{run_estimators, Design, Estimator, EstimatorOptions, EstimatorOutput};
pub use metrics::{summarize, EstimatorMetrics};
pub use population::{
    derive_seed, draw_cohorts, generate_population, DrawnCohorts, SimulatedPopulation,
};
pub use scenario::{Bins, ScenarioName, ScenarioSpec, Sizes};

use crate::error::{Error, Result};
use crate::numeric::sig4;

/// Run settings other than the scenario itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunOptions {
    pub replications: usize,
    pub estimators: Vec<Estimator>,
    pub options: EstimatorOptions,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            replications: 100,
            estimators: Estimator::default_set(),
            options: EstimatorOptions::default(),
        }
    }
}

impl RunOptions {
    pub fn from_toml(text: &str) -> Result<Self> {
        let opts: RunOptions = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        opts.validate()?;
        Ok(opts)
    }

    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(Error::Config("at least one replication is required".into()));
        }
        if self.estimators.is_empty() {
            return Err(Error::Config("no estimators selected".into()));
        }
        if self.options.max_order == 0 {
            return Err(Error::Config("max_order must be at least 1".into()));
        }
        if !(self.options.level > 0.0 && self.options.level < 1.0) {
            return Err(Error::Config("confidence level must lie in (0, 1)".into()));
        }
        self.options.nps.validate()?;
        self.options.raking.validate()?;
        self.options.selection.validate()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Replication {
    pub index: usize,
    pub seed: u64,
    pub n_np: usize,
    pub n_p: usize,
    pub redraws: usize,
    pub outputs: Vec<EstimatorOutput>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulationOutput {
    pub scenario: ScenarioName,
    pub seed: u64,
    pub truth: f64,
    pub intercepts: [f64; 3],
    pub replications: Vec<Replication>,
    pub metrics: Vec<EstimatorMetrics>,
}

impl SimulationOutput {
    pub fn metrics_for(&self, estimator: Estimator) -> Option<&EstimatorMetrics> {
        self.metrics.iter().find(|m| m.estimator == estimator)
    }

    /// One row per estimator.
    pub fn metrics_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:.16e}"));
        let mut out = String::from(
            "scenario,estimator,replications,converged,rel_bias_pct,avar,evar,nominal_cp_pct,oracle_cp_pct,divergent_pct\n",
        );
        for m in &self.metrics {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{:.16e}",
                self.scenario,
                m.estimator,
                m.replications,
                m.converged,
                opt(m.rel_bias_pct),
                opt(m.avar),
                opt(m.evar),
                opt(m.nominal_cp_pct),
                opt(m.oracle_cp_pct),
                m.divergent_pct
            );
        }
        out
    }

    /// One row per replication and estimator.
    pub fn replications_csv(&self) -> String {
        let mut out = String::from(
            "replication,seed,n_np,n_p,estimator,converged,estimate,variance,ci_low,ci_high,note\n",
        );
        for r in &self.replications {
            for o in &r.outputs {
                let cols = match &o.estimate {
                    Some(e) => format!(
                        "true,{:.16e},{:.16e},{:.16e},{:.16e}",
                        e.estimate, e.variance, e.ci_low, e.ci_high
                    ),
                    None => "false,,,,".into(),
                };
                let note = o.note.replace('"', "'");
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},\"{}\"",
                    r.index, r.seed, r.n_np, r.n_p, o.estimator, cols, note
                );
            }
        }
        out
    }

    /// Human-readable table with 4 significant digits; variances ×10⁵.
    pub fn summary_table(&self) -> String {
        let opt = |v: Option<f64>, scale: f64| v.map_or("-".to_string(), |x| sig4(x * scale));
        let mut out = format!(
            "{}  truth = {}  replications = {}\n{:<10} {:>10} {:>10} {:>10} {:>8} {:>8} {:>9}\n",
            self.scenario,
            sig4(self.truth),
            self.replications.len(),
            "method",
            "relbias%",
            "AVar e5",
            "EVar e5",
            "NomCP%",
            "OraCP%",
            "Diverg%"
        );
        for m in &self.metrics {
            let _ = writeln!(
                out,
                "{:<10} {:>10} {:>10} {:>10} {:>8} {:>8} {:>9}",
                m.estimator.name(),
                opt(m.rel_bias_pct, 1.0),
                opt(m.avar, 1e5),
                opt(m.evar, 1e5),
                opt(m.nominal_cp_pct, 1.0),
                opt(m.oracle_cp_pct, 1.0),
                sig4(m.divergent_pct)
            );
        }
        out
    }
}

/// Generates the population of `spec` and runs `run.replications`
/// replications of the estimator suite.
pub fn run_simulation(spec: &ScenarioSpec, run: &RunOptions) -> Result<SimulationOutput> {
    run.validate()?;
    let pop = generate_population(spec)?;
    run_on_population(&pop, run)
}

pub fn run_on_population(pop: &SimulatedPopulation, run: &RunOptions) -> Result<SimulationOutput> {
    run.validate()?;
    let design = Design::new(pop, run.options.max_order)?;
    let replications: Vec<Replication> = (0..run.replications)
        .into_par_iter()
        .map(|index| {
            let seed = derive_seed(pop.spec.seed, 1 + index as u64);
            let drawn = draw_cohorts(pop, seed)?;
            let outputs = run_estimators(pop, &drawn, &design, &run.estimators, &run.options)?;
            Ok(Replication {
                index,
                seed,
                n_np: drawn.np.n_rows(),
                n_p: drawn.p.n_rows(),
                redraws: drawn.redraws,
                outputs,
            })
        })
        .collect::<Result<_>>()?;
    let mut metrics = Vec::with_capacity(run.estimators.len());
    for (k, &est) in run.estimators.iter().enumerate() {
        let outputs: Vec<&EstimatorOutput> = replications.iter().map(|r| &r.outputs[k]).collect();
        metrics.push(summarize(est, &outputs, pop.prevalence, run.options.level)?);
    }
    Ok(SimulationOutput {
        scenario: pop.spec.name,
        seed: pop.spec.seed,
        truth: pop.prevalence,
        intercepts: pop.intercepts,
        replications,
        metrics,
    })
}
