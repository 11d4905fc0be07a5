//! Cohort CSV files.
//!
//! A header row names the covariates. Reserved columns: `_weight` (design
//! weight), `_outcome` (0/1) and `_id` (row identifier; the 0-based row index
//! is used when absent). Every other column is a categorical covariate.

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use super::cohort::{Cohort, Schema, Variable};
use crate::error::{Error, Result};

pub const WEIGHT_COLUMN: &str = "_weight";
pub const OUTCOME_COLUMN: &str = "_outcome";
pub const ID_COLUMN: &str = "_id";

/// A CSV file read as strings, with its header.
#[derive(Debug, Clone)]
pub struct RawTable {
    pub path: PathBuf,
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl RawTable {
    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::parse(&text, path)
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let headers: Vec<String> = reader
            .headers()
            .map_err(|e| Error::parse(path, 1, e.to_string()))?
            .iter()
            .map(str::to_string)
            .collect();
        let mut seen = HashMap::new();
        for h in &headers {
            if seen.insert(h.as_str(), ()).is_some() {
                return Err(Error::parse(path, 1, format!("duplicate column `{h}`")));
            }
        }
        let mut rows = Vec::new();
        for (i, rec) in reader.records().enumerate() {
            let rec = rec.map_err(|e| Error::parse(path, i + 2, e.to_string()))?;
            rows.push(rec.iter().map(str::to_string).collect());
        }
        if rows.is_empty() {
            return Err(Error::parse(path, 1, "no data rows"));
        }
        Ok(RawTable {
            path: path.to_path_buf(),
            headers,
            rows,
        })
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.headers.iter().position(|h| h == name)
    }

    /// Covariate column names (everything not reserved), in file order.
    pub fn covariates(&self) -> Vec<&str> {
        self.headers
            .iter()
            .map(String::as_str)
            .filter(|h| !h.starts_with('_'))
            .collect()
    }

    fn line_of(row: usize) -> usize {
        row + 2
    }
}

/// Orders level labels numerically when every label parses as a number,
/// lexicographically otherwise.
pub fn sort_levels(levels: &mut [String]) {
    let numeric: Option<Vec<f64>> = levels.iter().map(|l| l.parse::<f64>().ok()).collect();
    match numeric {
        Some(_) => levels.sort_by(|a, b| {
            let (x, y) = (a.parse::<f64>().unwrap(), b.parse::<f64>().unwrap());
            x.partial_cmp(&y)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then_with(|| a.cmp(b))
        }),
        None => levels.sort(),
    }
}

/// Infers one schema covering every table. All tables must carry the same
/// covariate columns; levels are the union of observed values (plus
/// `extra_levels`), sorted by [`sort_levels`].
pub fn infer_schema(
    tables: &[&RawTable],
    extra_levels: &HashMap<String, BTreeSet<String>>,
) -> Result<Schema> {
    let first = tables
        .first()
        .ok_or_else(|| Error::Schema("no tables to infer a schema from".into()))?;
    let names: Vec<&str> = first.covariates();
    for t in &tables[1..] {
        let a: BTreeSet<&str> = names.iter().copied().collect();
        let b: BTreeSet<&str> = t.covariates().into_iter().collect();
        if a != b {
            let only_a: Vec<_> = a.difference(&b).collect();
            let only_b: Vec<_> = b.difference(&a).collect();
            return Err(Error::Schema(format!(
                "covariate columns differ: only in {}: {:?}; only in {}: {:?}",
                first.path.display(),
                only_a,
                t.path.display(),
                only_b
            )));
        }
    }
    let mut variables = Vec::new();
    for name in names {
        let mut levels: BTreeSet<String> = BTreeSet::new();
        for t in tables {
            let j = t.column_index(name).expect("checked above");
            for (r, row) in t.rows.iter().enumerate() {
                let v = &row[j];
                if v.is_empty() {
                    return Err(Error::parse(
                        &t.path,
                        RawTable::line_of(r),
                        format!("empty value for covariate `{name}`"),
                    ));
                }
                levels.insert(v.clone());
            }
        }
        if let Some(extra) = extra_levels.get(name) {
            levels.extend(extra.iter().cloned());
        }
        let mut levels: Vec<String> = levels.into_iter().collect();
        sort_levels(&mut levels);
        variables.push(Variable::new(name, levels));
    }
    Schema::new(variables)
}

/// Encodes `table` against `schema`. Covariate columns of the table and the
/// schema must match exactly; a value outside the declared levels is reported
/// together with both level sets.
pub fn cohort_from_table(table: &RawTable, schema: Arc<Schema>) -> Result<Cohort> {
    let covs: BTreeSet<&str> = table.covariates().into_iter().collect();
    let declared: BTreeSet<&str> = schema.names().collect();
    if covs != declared {
        return Err(Error::Schema(format!(
            "{}: covariates {:?} do not match schema variables {:?}",
            table.path.display(),
            covs,
            declared
        )));
    }
    let mut codes = Vec::with_capacity(schema.len());
    for var in schema.variables() {
        let j = table.column_index(&var.name).expect("checked above");
        let mut col = Vec::with_capacity(table.rows.len());
        for (r, row) in table.rows.iter().enumerate() {
            let code = var.level_code(&row[j]).ok_or_else(|| {
                let observed: BTreeSet<&str> = table.rows.iter().map(|row| row[j].as_str()).collect();
                let declared: BTreeSet<&str> = var.levels.iter().map(String::as_str).collect();
                let extra: Vec<_> = observed.difference(&declared).collect();
                Error::parse(
                    &table.path,
                    RawTable::line_of(r),
                    format!(
                        "`{}` is not a level of `{}`; levels not in schema: {:?}; schema levels: {:?}",
                        row[j], var.name, extra, declared
                    ),
                )
            })?;
            col.push(code);
        }
        codes.push(col);
    }
    let mut cohort = Cohort::from_codes(schema, codes)?;
    if let Some(j) = table.column_index(WEIGHT_COLUMN) {
        let w = parse_numbers(table, j, WEIGHT_COLUMN)?;
        cohort = cohort
            .with_design_weights(w)
            .map_err(|e| Error::parse(&table.path, 1, e.to_string()))?;
    }
    if let Some(j) = table.column_index(OUTCOME_COLUMN) {
        let y = parse_numbers(table, j, OUTCOME_COLUMN)?;
        cohort = cohort
            .with_outcome(y)
            .map_err(|e| Error::parse(&table.path, 1, e.to_string()))?;
    }
    if let Some(j) = table.column_index(ID_COLUMN) {
        let ids = table.rows.iter().map(|r| r[j].clone()).collect();
        cohort = cohort.with_ids(ids)?;
    }
    Ok(cohort)
}

pub(crate) fn parse_numbers(table: &RawTable, j: usize, name: &str) -> Result<Vec<f64>> {
    table
        .rows
        .iter()
        .enumerate()
        .map(|(r, row)| {
            row[j].parse::<f64>().map_err(|_| {
                Error::parse(
                    &table.path,
                    RawTable::line_of(r),
                    format!("`{}` in column `{name}` is not a number", row[j]),
                )
            })
        })
        .collect()
}

/// Serializes a cohort back to the CSV contract.
pub fn cohort_to_csv(cohort: &Cohort) -> String {
    let schema = cohort.schema();
    let mut header: Vec<String> = vec![ID_COLUMN.to_string()];
    header.extend(schema.names().map(str::to_string));
    if cohort.design_weight().is_some() {
        header.push(WEIGHT_COLUMN.into());
    }
    if cohort.outcome().is_some() {
        header.push(OUTCOME_COLUMN.into());
    }
    let mut out = header.join(",");
    out.push('\n');
    let ids = cohort.ids();
    for (r, id) in ids.iter().enumerate() {
        let mut fields = vec![id.clone()];
        for (v, var) in schema.variables().iter().enumerate() {
            fields.push(var.levels[cohort.code(r, v) as usize].clone());
        }
        if let Some(w) = cohort.design_weight() {
            fields.push(format!("{:.16e}", w[r]));
        }
        if let Some(y) = cohort.outcome() {
            fields.push(format!("{}", y[r]));
        }
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(text: &str, name: &str) -> RawTable {
        RawTable::parse(text, Path::new(name)).unwrap()
    }

    #[test]
    fn numeric_levels_sort_numerically() {
        let mut l: Vec<String> = ["10", "2", "1"].iter().map(|s| s.to_string()).collect();
        sort_levels(&mut l);
        assert_eq!(l, ["1", "2", "10"]);
    }

    #[test]
    fn reserved_columns_are_not_covariates() {
        let t = table("_id,sex,_weight\na,f,2\nb,m,3\n", "p.csv");
        let schema = Arc::new(infer_schema(&[&t], &HashMap::new()).unwrap());
        let c = cohort_from_table(&t, schema).unwrap();
        assert_eq!(c.design_weight().unwrap(), &[2.0, 3.0]);
        assert_eq!(c.ids(), vec!["a", "b"]);
        assert_eq!(c.schema().len(), 1);
    }

    #[test]
    fn mismatched_covariates_report_both_sides() {
        let a = table("sex,age\nf,1\n", "np.csv");
        let b = table("sex,race\nf,x\n", "p.csv");
        let msg = infer_schema(&[&a, &b], &HashMap::new())
            .unwrap_err()
            .to_string();
        assert!(msg.contains("age") && msg.contains("race"), "{msg}");
    }

    #[test]
    fn undeclared_level_reports_line_and_level_sets() {
        let schema = Arc::new(Schema::new(vec![Variable::new("sex", ["f", "m"])]).unwrap());
        let t = table("sex\nf\nx\n", "np.csv");
        match cohort_from_table(&t, schema).unwrap_err() {
            Error::Parse { line, message, .. } => {
                assert_eq!(line, 3);
                assert!(message.contains("\"x\""), "{message}");
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn non_numeric_weight_is_parse_error() {
        let t = table("sex,_weight\nf,abc\n", "p.csv");
        let schema = Arc::new(infer_schema(&[&t], &HashMap::new()).unwrap());
        assert!(matches!(
            cohort_from_table(&t, schema),
            Err(Error::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn csv_round_trip() {
        let t = table("sex,_outcome\nf,1\nm,0\n", "np.csv");
        let schema = Arc::new(infer_schema(&[&t], &HashMap::new()).unwrap());
        let c = cohort_from_table(&t, schema.clone()).unwrap();
        let again = cohort_from_table(&table(&cohort_to_csv(&c), "x.csv"), schema).unwrap();
        assert_eq!(again.outcome(), c.outcome());
        assert_eq!(again.column(0), c.column(0));
    }
}
