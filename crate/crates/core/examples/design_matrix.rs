//! Term algebra and design matrices.
//!
//! Expands main effects into all two-way interactions, encodes a small cohort
//! with treatment coding and shows how aliased and empty columns are reported.
//!
//! ```text
//! cargo run --example design_matrix
//! ```

use std::sync::Arc;

use rails::model::{expand_terms, Cohort, DesignMatrix, Schema, Variable};

/// Returns `(retained columns, dropped columns)` of the full two-way design.
pub fn run_example() -> rails::Result<(usize, usize)> {
    let schema = Arc::new(Schema::new(vec![
        Variable::new("sex", ["f", "m"]),
        Variable::new("age", ["18-39", "40-64", "65+"]),
        // `smoker` duplicates `sex` in the data below, so its column is aliased.
        Variable::new("smoker", ["no", "yes"]),
    ])?);
    let rows = [
        ["f", "18-39", "no"],
        ["m", "18-39", "yes"],
        ["f", "40-64", "no"],
        ["m", "40-64", "yes"],
        ["f", "65+", "no"],
        ["f", "18-39", "no"],
    ];
    let cohort = Cohort::from_records(schema.clone(), &rows)?;
    let terms = expand_terms(&schema, &["sex", "age", "smoker"], 2, &[])?;
    println!("terms: {terms}");

    let x = DesignMatrix::build(&cohort, &terms, true)?;
    println!("retained columns:");
    for name in x.column_names() {
        println!("  {name}");
    }
    println!("dropped columns:");
    for d in x.aliased() {
        println!("  {} ({:?})", d.column.label, d.reason);
    }
    println!("{}", x.values());
    Ok((x.ncols(), x.aliased().len()))
}

fn main() -> rails::Result<()> {
    run_example().map(|_| ())
}
