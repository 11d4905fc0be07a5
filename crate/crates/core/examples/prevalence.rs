//! Prevalence estimation and double weighting.
//!
//! Computes a weighted prevalence with its linearized variance, then adjusts
//! the weights for an outcome missing at different rates in two groups.
//!
//! ```text
//! cargo run --example prevalence
//! ```

use nalgebra::DMatrix;
use rails::estimation::{double_weighting, estimate_prevalence};

/// Returns the weighted group totals over complete rows after double
/// weighting. Before any missingness both groups total 50.
pub fn run_example() -> rails::Result<[f64; 2]> {
    let e = estimate_prevalence(&[1.0, 3.0], &[1.0, 0.0], 0.95)?;
    println!("toy estimate {} (SE {:.4})", e.estimate, e.std_error);

    // Two groups of 10 rows with weight 5 each. The outcome is observed for
    // 8 of 10 rows in group 0 and 4 of 10 in group 1.
    let n = 20;
    let group: Vec<f64> = (0..n).map(|i| f64::from(u8::from(i >= 10))).collect();
    let complete: Vec<bool> = (0..n)
        .map(|i| if i < 10 { i < 8 } else { i < 14 })
        .collect();
    let x = DMatrix::from_fn(n, 2, |i, j| if j == 0 { 1.0 } else { group[i] });
    let weights = vec![5.0; n];
    let dw = double_weighting(&weights, &complete, &x, 100.0)?;

    let mut totals = [0.0; 2];
    for (&row, w) in dw.rows.iter().zip(&dw.weights) {
        totals[group[row] as usize] += w;
    }
    println!(
        "completeness estimates: group 0 {:.3}, group 1 {:.3}",
        dw.completeness[0],
        dw.completeness[dw.completeness.len() - 1]
    );
    println!(
        "restored totals: group 0 {:.6}, group 1 {:.6}",
        totals[0], totals[1]
    );

    // Outcome among complete rows: 2 of 8 in group 0, 3 of 4 in group 1.
    let y: Vec<f64> = dw
        .rows
        .iter()
        .map(|&r| f64::from(u8::from(if r < 10 { r < 2 } else { r < 13 })))
        .collect();
    let naive = y.iter().sum::<f64>() / y.len() as f64;
    let adjusted = estimate_prevalence(&dw.weights, &y, 0.95)?;
    println!(
        "complete-case mean {naive:.4}, double-weighted {:.4}",
        adjusted.estimate
    );
    Ok(totals)
}

fn main() -> rails::Result<()> {
    run_example().map(|_| ())
}
