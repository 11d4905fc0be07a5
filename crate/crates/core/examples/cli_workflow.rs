//! Writes a simulated data set in the CLI file formats and drives the
//! `fit` and `estimate` commands on it.
//!
//! ```text
//! cargo run --example cli_workflow -- [output-dir]
//! ```
//!
//! The directory afterwards holds `np.csv`, `p.csv`, `margins.csv`,
//! `fit.toml` and the fit outputs under `out/`, so the same run can be
//! repeated with the binary:
//!
//! ```text
//! rails fit --config <dir>/fit.toml
//! rails estimate --weights <dir>/out/weights.csv --cohort <dir>/np.csv
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use rails::model::io::cohort_to_csv;
use rails::model::{expand_terms, TermSet};
use rails::simulation::{
    derive_seed, draw_cohorts, generate_population, ScenarioName, ScenarioSpec, Sizes,
};

const FIT_TOML: &str = r#"np_cohort = "np.csv"
p_cohort = "p.csv"
margins = "margins.csv"
out = "out"

[terms]
mains = ["x1", "x2", "x3", "x4", "x5"]
max_order = 2

[selection]
alpha = 0.05
"#;

/// Writes the data set into `dir` and returns the path of `fit.toml`.
pub fn write_dataset(dir: &Path) -> rails::Result<PathBuf> {
    let spec = ScenarioSpec::builtin(ScenarioName::S3).with_sizes(Sizes {
        population: 50_000,
        np: 1_000,
        p: 250,
    });
    let pop = generate_population(&spec)?;
    let drawn = draw_cohorts(&pop, derive_seed(spec.seed, 1))?;
    let vars = ["x1", "x2", "x3", "x4", "x5"];
    let terms: TermSet = expand_terms(&pop.schema, &vars, 2, &[])?;
    fs::create_dir_all(dir)?;
    fs::write(dir.join("np.csv"), cohort_to_csv(&drawn.np))?;
    fs::write(dir.join("p.csv"), cohort_to_csv(&drawn.p))?;
    fs::write(
        dir.join("margins.csv"),
        pop.margins(&terms)?.to_csv_string(),
    )?;
    let config = dir.join("fit.toml");
    fs::write(&config, FIT_TOML)?;
    println!("true prevalence {:.4}", pop.prevalence);
    Ok(config)
}

/// Writes the data set, then runs `fit` and `estimate` through the CLI
/// entry point. Returns the two exit codes.
pub fn run_example(dir: &Path) -> rails::Result<(i32, i32)> {
    let config = write_dataset(dir)?;
    let fit = rails::cli::run([
        "rails".as_ref(),
        "fit".as_ref(),
        "--config".as_ref(),
        config.as_os_str(),
    ]);
    let weights = dir.join("out").join("weights.csv");
    let cohort = dir.join("np.csv");
    let estimate = rails::cli::run([
        "rails".as_ref(),
        "estimate".as_ref(),
        "--weights".as_ref(),
        weights.as_os_str(),
        "--cohort".as_ref(),
        cohort.as_os_str(),
    ]);
    Ok((fit, estimate))
}

fn main() -> rails::Result<()> {
    let dir = std::env::args()
        .nth(1)
        .map_or_else(|| PathBuf::from("rails-demo"), PathBuf::from);
    let (fit, estimate) = run_example(&dir)?;
    println!("exit codes: fit {fit}, estimate {estimate}");
    Ok(())
}
