//! Treatment-coded design matrices.
//!
//! A main effect with `L` levels contributes `L - 1` indicator columns (the
//! first declared level is the reference). An interaction contributes one
//! indicator per joint cell in which every variable sits at a non-reference
//! level. Column 0 is always the intercept.

use std::fmt;

use nalgebra::DMatrix;
use serde::Serialize;

use super::cohort::{Cohort, Schema};
use super::qr::pivoted_qr;
use super::term::{Term, TermSet};
use crate::error::{Error, Result};

/// Relative pivot threshold below which a column is declared aliased.
pub const ALIAS_TOLERANCE: f64 = 1e-10;

/// Identity of one encoded column.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ColumnLabel {
    /// `None` for the intercept.
    pub term: Option<Term>,
    /// Level codes of the cell, in term-variable order.
    pub cell: Vec<u32>,
    /// Human readable `term=levels` label.
    pub label: String,
}

impl ColumnLabel {
    fn intercept() -> Self {
        ColumnLabel {
            term: None,
            cell: Vec::new(),
            label: "(intercept)".into(),
        }
    }

    pub fn is_intercept(&self) -> bool {
        self.term.is_none()
    }
}

impl fmt::Display for ColumnLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DropReason {
    /// The cell is unobserved, so the column is identically zero.
    Empty,
    /// The column is a linear combination of retained columns.
    Collinear,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DroppedColumn {
    /// Index in the full (pre-drop) column expansion.
    pub full_index: usize,
    pub column: ColumnLabel,
    pub reason: DropReason,
}

/// Numeric expansion of a [`TermSet`] over a cohort.
#[derive(Debug, Clone)]
pub struct DesignMatrix {
    values: DMatrix<f64>,
    columns: Vec<ColumnLabel>,
    aliased: Vec<DroppedColumn>,
}

impl DesignMatrix {
    /// Encodes `cohort` over `terms`. Empty cells are always dropped; with
    /// `drop_aliased`, collinear columns found by pivoted QR are dropped too.
    pub fn build(cohort: &Cohort, terms: &TermSet, drop_aliased: bool) -> Result<Self> {
        let full = expand_columns(cohort.schema(), terms)?;
        let values = encode(cohort, &full)?;
        Ok(Self::reduce(values, full, drop_aliased))
    }

    /// Encodes two cohorts over one shared column set. Which columns are kept
    /// is decided on `reference` alone; `other` receives the same columns.
    ///
    /// The propensity Hessian sums over the probability cohort only, so that
    /// cohort is the natural reference for identifiability.
    pub fn build_shared(
        reference: &Cohort,
        other: &Cohort,
        terms: &TermSet,
    ) -> Result<(DesignMatrix, DesignMatrix)> {
        if reference.schema() != other.schema() {
            return Err(Error::Schema(
                "cohorts are encoded against different schemas".into(),
            ));
        }
        let full = expand_columns(reference.schema(), terms)?;
        let ref_values = encode(reference, &full)?;
        let reduced = Self::reduce(ref_values, full.clone(), true);
        let keep: Vec<usize> = reduced
            .columns
            .iter()
            .map(|c| {
                full.iter()
                    .position(|f| f == c)
                    .expect("retained column comes from full set")
            })
            .collect();
        let other_full = encode(other, &full)?;
        let other_values = other_full.select_columns(&keep);
        let other_dm = DesignMatrix {
            values: other_values,
            columns: reduced.columns.clone(),
            aliased: reduced.aliased.clone(),
        };
        Ok((reduced, other_dm))
    }

    fn reduce(values: DMatrix<f64>, full: Vec<ColumnLabel>, drop_aliased: bool) -> Self {
        let mut aliased = Vec::new();
        let mut keep: Vec<usize> = Vec::with_capacity(full.len());
        for (j, col) in values.column_iter().enumerate() {
            if j != 0 && col.iter().all(|&v| v == 0.0) {
                aliased.push(DroppedColumn {
                    full_index: j,
                    column: full[j].clone(),
                    reason: DropReason::Empty,
                });
            } else {
                keep.push(j);
            }
        }
        let mut values = values.select_columns(&keep);
        if drop_aliased && keep.len() > 1 {
            let qr = pivoted_qr(&values, &[0], ALIAS_TOLERANCE);
            if !qr.dropped.is_empty() {
                let mut retained: Vec<usize> = qr.order.clone();
                retained.sort_unstable();
                for &d in &qr.dropped {
                    let j = keep[d];
                    aliased.push(DroppedColumn {
                        full_index: j,
                        column: full[j].clone(),
                        reason: DropReason::Collinear,
                    });
                }
                values = values.select_columns(&retained);
                keep = retained.iter().map(|&r| keep[r]).collect();
            }
        }
        aliased.sort_by_key(|d| d.full_index);
        DesignMatrix {
            values,
            columns: keep.iter().map(|&j| full[j].clone()).collect(),
            aliased,
        }
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn columns(&self) -> &[ColumnLabel] {
        &self.columns
    }

    pub fn column_names(&self) -> Vec<String> {
        self.columns.iter().map(|c| c.label.clone()).collect()
    }

    pub fn intercept_index(&self) -> usize {
        0
    }

    pub fn aliased(&self) -> &[DroppedColumn] {
        &self.aliased
    }

    pub fn nrows(&self) -> usize {
        self.values.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.values.ncols()
    }

    /// Number of retained columns belonging to `term`.
    pub fn columns_of(&self, term: &Term) -> usize {
        self.columns
            .iter()
            .filter(|c| c.term.as_ref() == Some(term))
            .count()
    }
}

/// The full (pre-drop) column list for `terms`.
pub fn expand_columns(schema: &Schema, terms: &TermSet) -> Result<Vec<ColumnLabel>> {
    let mut cols = vec![ColumnLabel::intercept()];
    for term in terms {
        let idx = term.resolve(schema)?;
        let vars: Vec<_> = idx.iter().map(|&i| &schema.variables()[i]).collect();
        // Odometer over non-reference levels (codes 1..L) of every variable.
        let mut cell: Vec<u32> = vec![1; vars.len()];
        if vars.iter().any(|v| v.levels.len() < 2) {
            continue;
        }
        'cells: loop {
            let label = format!(
                "{}={}",
                term,
                cell.iter()
                    .zip(&vars)
                    .map(|(&c, v)| v.levels[c as usize].as_str())
                    .collect::<Vec<_>>()
                    .join(":")
            );
            cols.push(ColumnLabel {
                term: Some(term.clone()),
                cell: cell.clone(),
                label,
            });
            let mut k = vars.len();
            loop {
                if k == 0 {
                    break 'cells;
                }
                k -= 1;
                cell[k] += 1;
                if (cell[k] as usize) < vars[k].levels.len() {
                    break;
                }
                cell[k] = 1;
            }
        }
    }
    Ok(cols)
}

fn encode(cohort: &Cohort, columns: &[ColumnLabel]) -> Result<DMatrix<f64>> {
    let schema = cohort.schema();
    let n = cohort.n_rows();
    let mut m = DMatrix::zeros(n, columns.len());
    for (j, col) in columns.iter().enumerate() {
        match &col.term {
            None => m.column_mut(j).fill(1.0),
            Some(term) => {
                let idx = term.resolve(schema)?;
                for r in 0..n {
                    if idx
                        .iter()
                        .zip(&col.cell)
                        .all(|(&v, &c)| cohort.code(r, v) == c)
                    {
                        m[(r, j)] = 1.0;
                    }
                }
            }
        }
    }
    Ok(m)
}
