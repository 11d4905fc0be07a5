//! Multiplicative raking.
//!
//! Calibrates equal base weights to two univariate margins and then to a
//! two-way margin, and checks the residuals of the result.
//!
//! ```text
//! cargo run --example raking
//! ```

use std::sync::Arc;

use rails::model::{Cohort, MarginEntry, MarginTargets, Schema, Term, TermSet, Variable};
use rails::raking::{check_constraints, rake, CalibrationDesign, RakingOptions};

fn entry(term: &str, cell: &[&str], total: f64) -> rails::Result<MarginEntry> {
    Ok(MarginEntry {
        term: term.parse::<Term>()?,
        cell: cell.iter().map(|s| s.to_string()).collect(),
        total,
    })
}

/// Returns the weights raked to the univariate margins.
pub fn run_example() -> rails::Result<Vec<f64>> {
    let schema = Arc::new(Schema::new(vec![
        Variable::new("f1", ["A", "B"]),
        Variable::new("f2", ["0", "1"]),
    ])?);
    let cohort = Cohort::from_records(schema, &[["A", "0"], ["A", "1"], ["B", "0"], ["B", "1"]])?;
    let targets = MarginTargets::new(
        4.0,
        vec![
            entry("f1", &["A"], 3.0)?,
            entry("f1", &["B"], 1.0)?,
            entry("f2", &["0"], 2.0)?,
            entry("f2", &["1"], 2.0)?,
            entry("f1:f2", &["A", "0"], 1.0)?,
            entry("f1:f2", &["A", "1"], 2.0)?,
            entry("f1:f2", &["B", "0"], 1.0)?,
            entry("f1:f2", &["B", "1"], 0.0)?,
        ],
    )?;
    let opts = RakingOptions::default();
    let base = vec![1.0; 4];

    let mains = CalibrationDesign::new(&cohort, &targets, &TermSet::parse_list("f1, f2")?)?;
    let r = rake(&base, &mains, &opts)?;
    println!(
        "univariate margins: weights {:?}, {} passes",
        r.weights, r.passes
    );
    let report = check_constraints(&r.weights, &mains, opts.absolute_floor);
    println!(
        "max residual {:.2e}, sum {}",
        report.max_residual,
        r.weights.iter().sum::<f64>()
    );

    // The joint margin asks for zero weight on a populated cell, which
    // multiplicative raking cannot produce.
    let joint = CalibrationDesign::new(&cohort, &targets, &TermSet::parse_list("f1, f2, f1:f2")?)?;
    match rake(&base, &joint, &opts) {
        Ok(r) => println!("joint margin: converged {}", r.converged),
        Err(e) => println!("joint margin fails: {e}"),
    }
    Ok(r.weights)
}

fn main() -> rails::Result<()> {
    run_example().map(|_| ())
}
