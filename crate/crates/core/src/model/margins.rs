//! Population margin totals for term cells.

use std::collections::BTreeMap;

use serde::Serialize;

use super::cohort::{Cohort, Schema};
use super::term::{Term, TermSet};
use crate::error::{Error, Result};

/// Relative tolerance for "a term's cells sum to the population size".
pub const MARGIN_SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MarginEntry {
    pub term: Term,
    /// Level labels in term-variable order.
    pub cell: Vec<String>,
    pub total: f64,
}

impl MarginEntry {
    pub fn label(&self) -> String {
        format!("{}={}", self.term, self.cell.join(":"))
    }
}

/// Known population totals (one per term cell) plus the population size.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MarginTargets {
    population_size: f64,
    entries: Vec<MarginEntry>,
}

impl MarginTargets {
    /// Validates and stores `entries`. For every term the cell totals must
    /// sum to `population_size` within [`MARGIN_SUM_TOLERANCE`] (relative).
    pub fn new(population_size: f64, entries: Vec<MarginEntry>) -> Result<Self> {
        if !(population_size.is_finite() && population_size > 0.0) {
            return Err(Error::Domain(format!(
                "population size {population_size} must be positive and finite"
            )));
        }
        let mut sums: BTreeMap<&Term, f64> = BTreeMap::new();
        let mut seen = std::collections::HashSet::new();
        for e in &entries {
            if !(e.total.is_finite() && e.total >= 0.0) {
                return Err(Error::Domain(format!(
                    "total {} for {} is invalid",
                    e.total,
                    e.label()
                )));
            }
            if e.cell.len() != e.term.order() {
                return Err(Error::Schema(format!(
                    "cell `{}` has {} levels but term `{}` has {} variables",
                    e.cell.join(":"),
                    e.cell.len(),
                    e.term,
                    e.term.order()
                )));
            }
            if !seen.insert((e.term.clone(), e.cell.clone())) {
                return Err(Error::Domain(format!(
                    "duplicate margin cell {}",
                    e.label()
                )));
            }
            *sums.entry(&e.term).or_insert(0.0) += e.total;
        }
        for (term, sum) in sums {
            if (sum - population_size).abs() > MARGIN_SUM_TOLERANCE * population_size {
                return Err(Error::Domain(format!(
                    "cells of `{term}` sum to {sum}, population size is {population_size}"
                )));
            }
        }
        Ok(MarginTargets {
            population_size,
            entries,
        })
    }

    /// Weighted cell counts of `cohort` for every term in `terms` (unit
    /// weights when `weights` is `None`); cells are enumerated over the full
    /// schema level grid, so unobserved cells appear with total 0.
    pub fn tabulate(cohort: &Cohort, terms: &TermSet, weights: Option<&[f64]>) -> Result<Self> {
        let schema = cohort.schema();
        if let Some(w) = weights {
            if w.len() != cohort.n_rows() {
                return Err(Error::Shape(format!(
                    "{} weights for {} rows",
                    w.len(),
                    cohort.n_rows()
                )));
            }
        }
        let weight = |r: usize| weights.map_or(1.0, |w| w[r]);
        let population_size: f64 = (0..cohort.n_rows()).map(weight).sum();
        let mut entries = Vec::new();
        for term in terms {
            let idx = term.resolve(schema)?;
            let dims: Vec<usize> = idx
                .iter()
                .map(|&i| schema.variables()[i].levels.len())
                .collect();
            let cells: usize = dims.iter().product();
            let mut totals = vec![0.0; cells];
            for r in 0..cohort.n_rows() {
                let mut flat = 0usize;
                for (&v, &d) in idx.iter().zip(&dims) {
                    flat = flat * d + cohort.code(r, v) as usize;
                }
                totals[flat] += weight(r);
            }
            for (flat, total) in totals.into_iter().enumerate() {
                let mut rem = flat;
                let mut cell = vec![String::new(); idx.len()];
                for k in (0..idx.len()).rev() {
                    let code = rem % dims[k];
                    rem /= dims[k];
                    cell[k] = schema.variables()[idx[k]].levels[code].clone();
                }
                entries.push(MarginEntry {
                    term: term.clone(),
                    cell,
                    total,
                });
            }
        }
        Self::new(population_size, entries)
    }

    pub fn population_size(&self) -> f64 {
        self.population_size
    }

    pub fn entries(&self) -> &[MarginEntry] {
        &self.entries
    }

    /// Distinct terms in first-appearance order.
    pub fn terms(&self) -> TermSet {
        self.entries.iter().map(|e| e.term.clone()).collect()
    }

    pub fn has_term(&self, term: &Term) -> bool {
        self.entries.iter().any(|e| &e.term == term)
    }

    pub fn for_term<'a>(&'a self, term: &'a Term) -> impl Iterator<Item = &'a MarginEntry> + 'a {
        self.entries.iter().filter(move |e| &e.term == term)
    }

    /// Checks every term and cell level against `schema`.
    pub fn validate(&self, schema: &Schema) -> Result<()> {
        for e in &self.entries {
            let idx = e.term.resolve(schema)?;
            for (&v, level) in idx.iter().zip(&e.cell) {
                let var = &schema.variables()[v];
                if var.level_code(level).is_none() {
                    return Err(Error::Schema(format!(
                        "margin cell {}: `{level}` is not a level of `{}`",
                        e.label(),
                        var.name
                    )));
                }
            }
        }
        Ok(())
    }

    /// Parses the margin CSV: columns `term,cell,total` plus one
    /// `__N__,,<population_size>` row. Cell levels are given in the order the
    /// term's variables are written in the file.
    pub fn from_csv_str(text: &str, path: &std::path::Path) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let headers = reader
            .headers()
            .map_err(|e| Error::parse(path, 1, e.to_string()))?
            .clone();
        let col = |name: &str| {
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::parse(path, 1, format!("missing `{name}` column")))
        };
        let (ti, ci, vi) = (col("term")?, col("cell")?, col("total")?);
        let mut population_size = None;
        let mut entries = Vec::new();
        for (i, rec) in reader.records().enumerate() {
            let line = i + 2;
            let rec = rec.map_err(|e| Error::parse(path, line, e.to_string()))?;
            let term_txt = rec.get(ti).unwrap_or("");
            let total_txt = rec.get(vi).unwrap_or("");
            let total: f64 = total_txt
                .parse()
                .map_err(|_| Error::parse(path, line, format!("`{total_txt}` is not a number")))?;
            if term_txt == "__N__" {
                if population_size.replace(total).is_some() {
                    return Err(Error::parse(path, line, "population size given twice"));
                }
                continue;
            }
            let written: Vec<&str> = term_txt.split(':').map(str::trim).collect();
            let term = Term::new(written.iter().copied())
                .map_err(|e| Error::parse(path, line, e.to_string()))?;
            let levels: Vec<&str> = rec
                .get(ci)
                .unwrap_or("")
                .split(':')
                .map(str::trim)
                .collect();
            if levels.len() != written.len() {
                return Err(Error::parse(
                    path,
                    line,
                    format!(
                        "cell has {} levels, term `{term_txt}` has {}",
                        levels.len(),
                        written.len()
                    ),
                ));
            }
            // Reorder levels from file order into the term's canonical order.
            let cell = term
                .variables()
                .iter()
                .map(|v| {
                    let pos = written
                        .iter()
                        .position(|w| w == v)
                        .expect("same variable set");
                    levels[pos].to_string()
                })
                .collect();
            entries.push(MarginEntry { term, cell, total });
        }
        let population_size = population_size
            .ok_or_else(|| Error::parse(path, 1, "missing `__N__` population size row"))?;
        Self::new(population_size, entries).map_err(|e| Error::parse(path, 1, e.to_string()))
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("term,cell,total\n");
        for e in &self.entries {
            out.push_str(&format!(
                "{},{},{:.16e}\n",
                e.term,
                e.cell.join(":"),
                e.total
            ));
        }
        out.push_str(&format!("__N__,,{:.16e}\n", self.population_size));
        out
    }
}
