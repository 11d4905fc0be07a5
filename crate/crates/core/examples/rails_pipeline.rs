//! The full pipeline on simulated cohorts.
//!
//! Greedy interaction selection on the pseudo-likelihood, raking of the
//! resulting base weights, and LIFO relaxation when raking fails. The
//! estimate is compared with the unweighted mean and the known truth.
//!
//! ```text
//! cargo run --release --example rails_pipeline
//! ```

use rails::estimation::estimate_prevalence;
use rails::model::expand_terms;
use rails::selection::{rails_fit, SelectionOptions};
use rails::simulation::{
    derive_seed, draw_cohorts, generate_population, ScenarioName, ScenarioSpec,
};
use rails::{nps::NpsOptions, raking::RakingOptions};

/// Returns `(truth, naive estimate, RAILS estimate)`.
pub fn run_example() -> rails::Result<(f64, f64, f64)> {
    // Interactions drive the outcome in S3, so univariate raking is biased.
    let spec = ScenarioSpec::builtin(ScenarioName::S3);
    let pop = generate_population(&spec)?;
    let drawn = draw_cohorts(&pop, derive_seed(spec.seed, 1))?;
    let vars = ["x1", "x2", "x3", "x4", "x5"];
    let full = expand_terms(&pop.schema, &vars, 2, &[])?;
    let mains = full.main_effects();
    let pool = full
        .iter()
        .filter(|t| !t.is_main_effect())
        .cloned()
        .collect();
    let targets = pop.margins(&full)?;

    let r = rails_fit(
        &drawn.np,
        &drawn.p,
        &targets,
        &mains,
        &pool,
        &NpsOptions::default(),
        &RakingOptions::default(),
        &SelectionOptions::default(),
    )?;

    println!(
        "{} non-probability rows, {} probability rows",
        drawn.np.n_rows(),
        drawn.p.n_rows()
    );
    println!("selection ({:?}):", r.selection.stopped_reason);
    for s in &r.selection.steps {
        println!(
            "  + {:<6} Δℓ {:>9.3}  ν {:>2}  p {:.2e}",
            s.term.to_string(),
            s.delta_loglik,
            s.df,
            s.p_value
        );
    }
    for (k, a) in r.attempts.iter().enumerate() {
        println!(
            "raking attempt {}: {} terms, {}",
            k + 1,
            a.terms.len(),
            a.failure.as_deref().unwrap_or("converged")
        );
    }
    let removed: Vec<String> = r.removed_by_lifo.iter().map(ToString::to_string).collect();
    println!("removed by LIFO: [{}]", removed.join(", "));

    let y = drawn
        .np
        .outcome()
        .expect("simulated cohorts carry outcomes");
    let naive = y.iter().sum::<f64>() / y.len() as f64;
    let est = estimate_prevalence(&r.weights, y, 0.95)?;
    println!("truth  {:.4}", pop.prevalence);
    println!("naive  {naive:.4}");
    println!(
        "RAILS  {:.4}  (95% CI {:.4} to {:.4})",
        est.estimate, est.ci_low, est.ci_high
    );
    Ok((pop.prevalence, naive, est.estimate))
}

fn main() -> rails::Result<()> {
    run_example().map(|_| ())
}
