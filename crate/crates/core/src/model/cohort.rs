//! Categorical cohorts over a shared schema.
//!
//! Every covariate is stored as a level code (index into the variable's
//! declared level list). Both cohorts entering the pseudo-likelihood must be
//! encoded against the same [`Schema`], otherwise their design matrices would
//! not line up column for column.

use std::collections::HashMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Variable {
    pub name: String,
    /// Ordered levels; the first one is the reference level.
    pub levels: Vec<String>,
}

impl Variable {
    pub fn new<S: Into<String>>(
        name: impl Into<String>,
        levels: impl IntoIterator<Item = S>,
    ) -> Self {
        Variable {
            name: name.into(),
            levels: levels.into_iter().map(Into::into).collect(),
        }
    }

    pub fn level_code(&self, level: &str) -> Option<u32> {
        self.levels
            .iter()
            .position(|l| l == level)
            .map(|i| i as u32)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schema {
    variables: Vec<Variable>,
}

impl Schema {
    pub fn new(variables: Vec<Variable>) -> Result<Self> {
        let mut seen = HashMap::new();
        for (i, v) in variables.iter().enumerate() {
            if v.name.is_empty() {
                return Err(Error::Schema(format!("variable {i} has an empty name")));
            }
            if v.name.starts_with('_') {
                return Err(Error::Schema(format!(
                    "variable name `{}` is reserved (leading underscore)",
                    v.name
                )));
            }
            if v.name.contains(':') {
                return Err(Error::Schema(format!(
                    "variable name `{}` contains `:`",
                    v.name
                )));
            }
            if seen.insert(v.name.as_str(), i).is_some() {
                return Err(Error::Schema(format!("duplicate variable `{}`", v.name)));
            }
            if v.levels.is_empty() {
                return Err(Error::Schema(format!(
                    "variable `{}` declares no levels",
                    v.name
                )));
            }
            let mut lv = HashMap::new();
            for l in &v.levels {
                if lv.insert(l.as_str(), ()).is_some() {
                    return Err(Error::Schema(format!(
                        "variable `{}` declares level `{l}` twice",
                        v.name
                    )));
                }
            }
        }
        Ok(Schema { variables })
    }

    pub fn variables(&self) -> &[Variable] {
        &self.variables
    }

    pub fn len(&self) -> usize {
        self.variables.len()
    }

    pub fn is_empty(&self) -> bool {
        self.variables.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.variables.iter().position(|v| v.name == name)
    }

    pub fn variable(&self, name: &str) -> Result<&Variable> {
        self.index_of(name)
            .map(|i| &self.variables[i])
            .ok_or_else(|| Error::Schema(format!("unknown variable `{name}`")))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.variables.iter().map(|v| v.name.as_str())
    }
}

/// A rectangular table of categorical covariates with optional design
/// weights and an optional binary outcome.
#[derive(Debug, Clone)]
pub struct Cohort {
    schema: Arc<Schema>,
    /// Column-major level codes, one vector per schema variable.
    codes: Vec<Vec<u32>>,
    n_rows: usize,
    design_weight: Option<Vec<f64>>,
    outcome: Option<Vec<f64>>,
    ids: Option<Vec<String>>,
}

impl Cohort {
    /// Builds a cohort from column-major level codes.
    pub fn from_codes(schema: Arc<Schema>, codes: Vec<Vec<u32>>) -> Result<Self> {
        if codes.len() != schema.len() {
            return Err(Error::Shape(format!(
                "{} code columns for {} schema variables",
                codes.len(),
                schema.len()
            )));
        }
        let n_rows = codes.first().map_or(0, Vec::len);
        if n_rows == 0 {
            return Err(Error::Domain("cohort has no rows".into()));
        }
        for (var, col) in schema.variables().iter().zip(&codes) {
            if col.len() != n_rows {
                return Err(Error::Shape(format!(
                    "column `{}` has {} rows, expected {n_rows}",
                    var.name,
                    col.len()
                )));
            }
            let n_levels = var.levels.len() as u32;
            if let Some(row) = col.iter().position(|&c| c >= n_levels) {
                return Err(Error::Schema(format!(
                    "row {row}: code {} out of range for `{}` ({} levels)",
                    col[row], var.name, n_levels
                )));
            }
        }
        Ok(Cohort {
            schema,
            codes,
            n_rows,
            design_weight: None,
            outcome: None,
            ids: None,
        })
    }

    /// Builds a cohort from row records of level labels in schema order.
    pub fn from_records<R, S>(schema: Arc<Schema>, records: &[R]) -> Result<Self>
    where
        R: AsRef<[S]>,
        S: AsRef<str>,
    {
        let mut codes = vec![Vec::with_capacity(records.len()); schema.len()];
        for (row, rec) in records.iter().enumerate() {
            let rec = rec.as_ref();
            if rec.len() != schema.len() {
                return Err(Error::Shape(format!(
                    "record {row} has {} fields, schema has {}",
                    rec.len(),
                    schema.len()
                )));
            }
            for (j, (var, value)) in schema.variables().iter().zip(rec).enumerate() {
                let value = value.as_ref();
                let code = var.level_code(value).ok_or_else(|| {
                    Error::Schema(format!(
                        "record {row}: `{value}` is not a declared level of `{}`",
                        var.name
                    ))
                })?;
                codes[j].push(code);
            }
        }
        Self::from_codes(schema, codes)
    }

    pub fn with_design_weights(mut self, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != self.n_rows {
            return Err(Error::Shape(format!(
                "{} design weights for {} rows",
                weights.len(),
                self.n_rows
            )));
        }
        if let Some((i, w)) = weights
            .iter()
            .enumerate()
            .find(|(_, w)| !(w.is_finite() && **w > 0.0))
        {
            return Err(Error::Domain(format!(
                "design weight {w} at row {i} is not positive and finite"
            )));
        }
        self.design_weight = Some(weights);
        Ok(self)
    }

    pub fn with_outcome(mut self, outcome: Vec<f64>) -> Result<Self> {
        if outcome.len() != self.n_rows {
            return Err(Error::Shape(format!(
                "{} outcomes for {} rows",
                outcome.len(),
                self.n_rows
            )));
        }
        if let Some((i, y)) = outcome
            .iter()
            .enumerate()
            .find(|(_, y)| **y != 0.0 && **y != 1.0)
        {
            return Err(Error::Domain(format!("outcome {y} at row {i} is not 0/1")));
        }
        self.outcome = Some(outcome);
        Ok(self)
    }

    pub fn with_ids(mut self, ids: Vec<String>) -> Result<Self> {
        if ids.len() != self.n_rows {
            return Err(Error::Shape(format!(
                "{} ids for {} rows",
                ids.len(),
                self.n_rows
            )));
        }
        self.ids = Some(ids);
        Ok(self)
    }

    pub fn schema(&self) -> &Arc<Schema> {
        &self.schema
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn column(&self, variable: usize) -> &[u32] {
        &self.codes[variable]
    }

    pub fn column_by_name(&self, name: &str) -> Result<&[u32]> {
        let idx = self
            .schema
            .index_of(name)
            .ok_or_else(|| Error::Schema(format!("unknown variable `{name}`")))?;
        Ok(&self.codes[idx])
    }

    pub fn code(&self, row: usize, variable: usize) -> u32 {
        self.codes[variable][row]
    }

    pub fn design_weight(&self) -> Option<&[f64]> {
        self.design_weight.as_deref()
    }

    pub fn outcome(&self) -> Option<&[f64]> {
        self.outcome.as_deref()
    }

    /// Row identifiers: the explicit `_id` column when present, else the
    /// 0-based row index.
    pub fn ids(&self) -> Vec<String> {
        match &self.ids {
            Some(ids) => ids.clone(),
            None => (0..self.n_rows).map(|i| i.to_string()).collect(),
        }
    }

    pub fn has_explicit_ids(&self) -> bool {
        self.ids.is_some()
    }

    /// A new cohort holding `rows` (in the given order).
    pub fn subset(&self, rows: &[usize]) -> Result<Self> {
        let codes = self
            .codes
            .iter()
            .map(|col| rows.iter().map(|&r| col[r]).collect())
            .collect();
        let mut out = Self::from_codes(self.schema.clone(), codes)?;
        out.design_weight = self
            .design_weight
            .as_ref()
            .map(|w| rows.iter().map(|&r| w[r]).collect());
        out.outcome = self
            .outcome
            .as_ref()
            .map(|y| rows.iter().map(|&r| y[r]).collect());
        out.ids = Some(match &self.ids {
            Some(ids) => rows.iter().map(|&r| ids[r].clone()).collect(),
            None => rows.iter().map(|r| r.to_string()).collect(),
        });
        Ok(out)
    }
}
