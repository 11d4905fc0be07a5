//! Monte-Carlo comparison of the estimator suite.
//!
//! Runs a few replications of a scenario and prints the summary table
//! (relative bias, average and empirical variance, coverage, divergence).
//!
//! ```text
//! cargo run --release --example simulation -- S3 50
//! ```

use rails::simulation::{
    run_simulation, Estimator, RunOptions, ScenarioName, ScenarioSpec, SimulationOutput,
};

pub fn run_example(name: ScenarioName, replications: usize) -> rails::Result<SimulationOutput> {
    let spec = ScenarioSpec::builtin(name);
    let run = RunOptions {
        replications,
        estimators: Estimator::default_set(),
        ..RunOptions::default()
    };
    let out = run_simulation(&spec, &run)?;
    print!("{}", out.summary_table());
    Ok(out)
}

fn main() -> rails::Result<()> {
    let mut args = std::env::args().skip(1);
    let name = args.next().map_or(Ok(ScenarioName::S1), |s| s.parse())?;
    let reps = args.next().and_then(|s| s.parse().ok()).unwrap_or(20);
    run_example(name, reps).map(|_| ())
}
