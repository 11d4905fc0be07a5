//! Multiplicative generalized raking.
//!
//! Weights are calibrated to population totals by minimizing
//! `Σ dᵢ G(wᵢ/dᵢ)` with `G(x) = x log x − x + 1` subject to the margin
//! constraints. The solution has the form `wᵢ = dᵢ exp(xᵢᵀλ)`, and iterative
//! proportional fitting reaches it by rescaling the rows of one constraint
//! cell at a time. Because every update is a positive factor, weights stay
//! strictly positive.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Cohort, MarginTargets, TermSet};

/// Relative tolerance on `Σw = N` for a converged result.
pub const TOTAL_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RakingOptions {
    /// Maximum relative residual `|Σ w x_j − T_j| / max(T_j, floor)`.
    pub constraint_tolerance: f64,
    /// Denominator floor for near-zero targets.
    pub absolute_floor: f64,
    /// Maximum number of full sweeps over the constraints.
    pub max_passes: usize,
    /// Optional bound `1/r ≤ wᵢ/dᵢ ≤ r`. Off by default.
    pub max_weight_ratio: Option<f64>,
}

impl Default for RakingOptions {
    fn default() -> Self {
        RakingOptions {
            constraint_tolerance: 1e-6,
            absolute_floor: 1e-8,
            max_passes: 200,
            max_weight_ratio: None,
        }
    }
}

impl RakingOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.constraint_tolerance > 0.0) {
            return Err(Error::Config("raking tolerance must be positive".into()));
        }
        if !(self.absolute_floor > 0.0) {
            return Err(Error::Config(
                "raking absolute floor must be positive".into(),
            ));
        }
        if self.max_passes == 0 {
            return Err(Error::Config("raking max_passes must be at least 1".into()));
        }
        if let Some(r) = self.max_weight_ratio {
            if !(r > 1.0) {
                return Err(Error::Config("max_weight_ratio must exceed 1".into()));
            }
        }
        Ok(())
    }
}

/// One margin constraint: the rows in a cell and their target total.
#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub label: String,
    pub rows: Vec<usize>,
    pub target: f64,
}

/// The constraint system for one cohort, in sweep order.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationDesign {
    n_rows: usize,
    population_size: f64,
    constraints: Vec<Constraint>,
}

impl CalibrationDesign {
    /// Constraints for every margin cell of the terms in `terms` that have
    /// targets, in term order and then margin-file order. Terms without
    /// targets are skipped.
    pub fn new(cohort: &Cohort, targets: &MarginTargets, terms: &TermSet) -> Result<Self> {
        targets.validate(cohort.schema())?;
        let schema = cohort.schema();
        let mut constraints = Vec::new();
        for term in terms {
            let idx = term.resolve(schema)?;
            for entry in targets.for_term(term) {
                let codes: Vec<u32> = idx
                    .iter()
                    .zip(&entry.cell)
                    .map(|(&v, level)| schema.variables()[v].level_code(level).expect("validated"))
                    .collect();
                let rows = (0..cohort.n_rows())
                    .filter(|&r| {
                        idx.iter()
                            .zip(&codes)
                            .all(|(&v, &c)| cohort.code(r, v) == c)
                    })
                    .collect();
                constraints.push(Constraint {
                    label: entry.label(),
                    rows,
                    target: entry.total,
                });
            }
        }
        Ok(CalibrationDesign {
            n_rows: cohort.n_rows(),
            population_size: targets.population_size(),
            constraints,
        })
    }

    /// Constraints from 0/1 indicator columns of `x` (one per target).
    pub fn from_indicators(
        x: &nalgebra::DMatrix<f64>,
        targets: &[f64],
        labels: &[String],
        population_size: f64,
    ) -> Result<Self> {
        if x.ncols() != targets.len() || labels.len() != targets.len() {
            return Err(Error::Shape(format!(
                "{} indicator columns, {} targets, {} labels",
                x.ncols(),
                targets.len(),
                labels.len()
            )));
        }
        let mut constraints = Vec::new();
        for (j, col) in x.column_iter().enumerate() {
            if col.iter().any(|&v| v != 0.0 && v != 1.0) {
                return Err(Error::Domain(format!(
                    "column {} is not a 0/1 indicator",
                    labels[j]
                )));
            }
            constraints.push(Constraint {
                label: labels[j].clone(),
                rows: col
                    .iter()
                    .enumerate()
                    .filter(|(_, v)| **v == 1.0)
                    .map(|(i, _)| i)
                    .collect(),
                target: targets[j],
            });
        }
        Ok(CalibrationDesign {
            n_rows: x.nrows(),
            population_size,
            constraints,
        })
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn population_size(&self) -> f64 {
        self.population_size
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    /// The same constraints swept in the order `perm`.
    pub fn reordered(&self, perm: &[usize]) -> Result<Self> {
        let mut seen = vec![false; self.constraints.len()];
        if perm.len() != seen.len()
            || perm
                .iter()
                .any(|&i| i >= seen.len() || std::mem::replace(&mut seen[i], true))
        {
            return Err(Error::Domain("not a permutation of the constraints".into()));
        }
        Ok(CalibrationDesign {
            n_rows: self.n_rows,
            population_size: self.population_size,
            constraints: perm.iter().map(|&i| self.constraints[i].clone()).collect(),
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RakingResult {
    pub weights: Vec<f64>,
    pub converged: bool,
    /// Convergence checks performed; a sweep follows every failed check.
    pub passes: usize,
    pub labels: Vec<String>,
    /// Relative residual of each constraint at exit.
    pub residuals: Vec<f64>,
    /// Accumulated log scale factor of each constraint.
    pub log_multipliers: Vec<f64>,
    /// Accumulated log factor of the `Σw = N` rescaling.
    pub log_total_multiplier: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ResidualReport {
    pub labels: Vec<String>,
    pub residuals: Vec<f64>,
    pub max_residual: f64,
    /// `Σw − N`.
    pub total_gap: f64,
    pub min_weight: f64,
    pub max_weight: f64,
    /// `n Σw² / (Σw)²`.
    pub design_effect: f64,
}

fn relative_residuals(weights: &[f64], design: &CalibrationDesign, floor: f64) -> Vec<f64> {
    design
        .constraints
        .iter()
        .map(|c| {
            let s: f64 = c.rows.iter().map(|&r| weights[r]).sum();
            (s - c.target).abs() / c.target.max(floor)
        })
        .collect()
}

/// Relative residual of every constraint plus a weight summary.
pub fn check_constraints(
    weights: &[f64],
    design: &CalibrationDesign,
    absolute_floor: f64,
) -> ResidualReport {
    let residuals = relative_residuals(weights, design, absolute_floor);
    let total: f64 = weights.iter().sum();
    let sq: f64 = weights.iter().map(|w| w * w).sum();
    let n = weights.len() as f64;
    ResidualReport {
        labels: design.constraints.iter().map(|c| c.label.clone()).collect(),
        max_residual: residuals.iter().cloned().fold(0.0, f64::max),
        residuals,
        total_gap: total - design.population_size,
        min_weight: weights.iter().cloned().fold(f64::INFINITY, f64::min),
        max_weight: weights.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        design_effect: if total > 0.0 {
            n * sq / (total * total)
        } else {
            f64::NAN
        },
    }
}

/// Rakes `base` to the targets in `design`.
///
/// A constraint with a positive target but no supporting rows is a
/// structural-zero error; a zero target over rows with positive weight is a
/// zero-target error. Running out of passes is not an error: the result is
/// returned with `converged = false`.
pub fn rake(
    base: &[f64],
    design: &CalibrationDesign,
    opts: &RakingOptions,
) -> Result<RakingResult> {
    opts.validate()?;
    if base.len() != design.n_rows {
        return Err(Error::Shape(format!(
            "{} base weights for {} rows",
            base.len(),
            design.n_rows
        )));
    }
    if let Some(w) = base.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
        return Err(Error::Domain(format!(
            "base weight {w} is not positive and finite"
        )));
    }
    let n_total = design.population_size;
    let mut active = Vec::with_capacity(design.constraints.len());
    for c in &design.constraints {
        let support: f64 = c.rows.iter().map(|&r| base[r]).sum();
        match (c.target > 0.0, support > 0.0) {
            (true, false) => {
                return Err(Error::StructuralZero {
                    constraint: c.label.clone(),
                    target: c.target,
                })
            }
            (false, true) => {
                return Err(Error::ZeroTarget {
                    constraint: c.label.clone(),
                    current: support,
                })
            }
            (true, true) => active.push(true),
            (false, false) => active.push(false),
        }
    }

    let k = design.constraints.len();
    let mut w = base.to_vec();
    let mut log_mult = vec![0.0; k];
    let mut log_total = 0.0;
    let bounds = opts.max_weight_ratio.map(|r| (1.0 / r, r));

    let is_converged = |w: &[f64]| -> (bool, Vec<f64>) {
        let res = relative_residuals(w, design, opts.absolute_floor);
        let total: f64 = w.iter().sum();
        let ok = res.iter().all(|&r| r <= opts.constraint_tolerance)
            && (total - n_total).abs() <= TOTAL_TOLERANCE * n_total;
        (ok, res)
    };

    let mut passes = 0;
    let mut converged = false;
    let mut residuals = Vec::new();
    while passes < opts.max_passes {
        passes += 1;
        let (ok, res) = is_converged(&w);
        residuals = res;
        if ok {
            converged = true;
            break;
        }
        let previous = w.clone();
        for (j, c) in design.constraints.iter().enumerate() {
            if !active[j] {
                continue;
            }
            let s: f64 = c.rows.iter().map(|&r| w[r]).sum();
            let factor = c.target / s;
            log_mult[j] += factor.ln();
            for &r in &c.rows {
                w[r] *= factor;
                if let Some((lo, hi)) = bounds {
                    w[r] = w[r].clamp(lo * base[r], hi * base[r]);
                }
            }
        }
        let total: f64 = w.iter().sum();
        let f = n_total / total;
        log_total += f.ln();
        for x in &mut w {
            *x *= f;
        }
        if w.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
            // Numerical breakdown: keep the last valid weights.
            w = previous;
            residuals = relative_residuals(&w, design, opts.absolute_floor);
            break;
        }
    }
    if !converged && passes == opts.max_passes {
        let (ok, res) = is_converged(&w);
        converged = ok;
        residuals = res;
    }
    Ok(RakingResult {
        weights: w,
        converged,
        passes,
        labels: design.constraints.iter().map(|c| c.label.clone()).collect(),
        residuals,
        log_multipliers: log_mult,
        log_total_multiplier: log_total,
    })
}
