//! Nested propensity scores.
//!
//! Fits the pseudo-likelihood of a non-probability cohort against a weighted
//! probability sample and turns the fitted propensities into base weights
//! `1 + exp(-xᵀθ)`.
//!
//! ```text
//! cargo run --example nested_propensity
//! ```

use std::sync::Arc;

use rails::model::{Cohort, Schema, TermSet, Variable};
use rails::nps::NpsOptions;
use rails::selection::{fit_propensity, Cohorts};

/// Returns the base weights of the non-probability rows.
pub fn run_example() -> rails::Result<Vec<f64>> {
    let schema = Arc::new(Schema::new(vec![
        Variable::new("age", ["young", "old"]),
        Variable::new("region", ["north", "south"]),
    ])?);
    // Young people from the north volunteer far more often.
    let np_rows: Vec<[&str; 2]> = std::iter::repeat_n(["young", "north"], 40)
        .chain(std::iter::repeat_n(["young", "south"], 20))
        .chain(std::iter::repeat_n(["old", "north"], 10))
        .chain(std::iter::repeat_n(["old", "south"], 5))
        .collect();
    let np = Cohort::from_records(schema.clone(), &np_rows)?;
    // The probability sample represents a population of 1000 in equal cells.
    let p_rows = [
        ["young", "north"],
        ["young", "south"],
        ["old", "north"],
        ["old", "south"],
    ];
    let p = Cohort::from_records(schema, &p_rows)?.with_design_weights(vec![250.0; 4])?;

    let terms = TermSet::parse_list("age, region")?;
    let fit = fit_propensity(Cohorts::new(&np, &p)?, &terms, &NpsOptions::default())?;
    println!(
        "converged {} after {} iterations, loglik {:.4}",
        fit.fit.converged, fit.fit.iterations, fit.fit.loglik
    );
    for (name, theta) in fit.x_np.column_names().iter().zip(fit.fit.theta.iter()) {
        println!("  {name:<14} {theta:>9.4}");
    }
    let w = fit.base_weights();
    println!(
        "base weights: young/north {:.2}, old/south {:.2}",
        w[0],
        w[w.len() - 1]
    );
    println!(
        "weighted total {:.2} (population 1000)",
        w.iter().sum::<f64>()
    );
    Ok(w)
}

fn main() -> rails::Result<()> {
    run_example().map(|_| ())
}
