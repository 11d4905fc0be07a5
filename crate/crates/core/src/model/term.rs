//! Model terms: main effects and interactions over schema variables.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::cohort::Schema;
use crate::error::{Error, Result};

/// A main effect (one variable) or an interaction (several distinct
/// variables). Variables are kept in sorted order so that `a:b` and `b:a`
/// compare equal.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Term {
    variables: Vec<String>,
}

impl Term {
    pub fn new<S: Into<String>>(variables: impl IntoIterator<Item = S>) -> Result<Self> {
        let mut variables: Vec<String> = variables.into_iter().map(Into::into).collect();
        if variables.is_empty() {
            return Err(Error::Schema("a term needs at least one variable".into()));
        }
        if let Some(v) = variables.iter().find(|v| v.is_empty() || v.contains(':')) {
            return Err(Error::Schema(format!(
                "invalid variable name `{v}` in term"
            )));
        }
        variables.sort();
        if let Some(w) = variables.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::Schema(format!(
                "variable `{}` appears twice in one term",
                w[0]
            )));
        }
        Ok(Term { variables })
    }

    pub fn main(variable: impl Into<String>) -> Self {
        Term::new([variable.into()]).expect("single variable term")
    }

    pub fn variables(&self) -> &[String] {
        &self.variables
    }

    pub fn order(&self) -> usize {
        self.variables.len()
    }

    pub fn is_main_effect(&self) -> bool {
        self.variables.len() == 1
    }

    /// Schema indices of the term's variables, in term order.
    pub fn resolve(&self, schema: &Schema) -> Result<Vec<usize>> {
        self.variables
            .iter()
            .map(|v| {
                schema.index_of(v).ok_or_else(|| {
                    Error::Schema(format!("unknown variable `{v}` in term `{self}`"))
                })
            })
            .collect()
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.variables.join(":"))
    }
}

impl FromStr for Term {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Term::new(s.trim().split(':').map(str::trim))
    }
}

impl TryFrom<String> for Term {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Term> for String {
    fn from(t: Term) -> String {
        t.to_string()
    }
}

/// Insertion-ordered set of terms. The insertion order is the LIFO stack
/// order used when constraints are relaxed.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<Term>", into = "Vec<Term>")]
pub struct TermSet {
    terms: Vec<Term>,
}

impl From<Vec<Term>> for TermSet {
    fn from(terms: Vec<Term>) -> Self {
        terms.into_iter().collect()
    }
}

impl From<TermSet> for Vec<Term> {
    fn from(set: TermSet) -> Self {
        set.terms
    }
}

impl TermSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends `term`; returns false (and leaves the set unchanged) when it is
    /// already present.
    pub fn push(&mut self, term: Term) -> bool {
        if self.contains(&term) {
            return false;
        }
        self.terms.push(term);
        true
    }

    pub fn pop(&mut self) -> Option<Term> {
        self.terms.pop()
    }

    pub fn remove(&mut self, term: &Term) -> bool {
        match self.terms.iter().position(|t| t == term) {
            Some(i) => {
                self.terms.remove(i);
                true
            }
            None => false,
        }
    }

    pub fn contains(&self, term: &Term) -> bool {
        self.terms.contains(term)
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Term> {
        self.terms.iter()
    }

    pub fn as_slice(&self) -> &[Term] {
        &self.terms
    }

    pub fn last(&self) -> Option<&Term> {
        self.terms.last()
    }

    /// `self` followed by the members of `other` not already present.
    pub fn union(&self, other: &TermSet) -> TermSet {
        let mut out = self.clone();
        out.extend(other.iter().cloned());
        out
    }

    pub fn with(&self, term: &Term) -> TermSet {
        let mut out = self.clone();
        out.push(term.clone());
        out
    }

    pub fn main_effects(&self) -> TermSet {
        self.iter()
            .filter(|t| t.is_main_effect())
            .cloned()
            .collect()
    }

    /// Parses a comma separated list such as `"a, b, a:b"`.
    pub fn parse_list(s: &str) -> Result<TermSet> {
        s.split(',')
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .map(str::parse)
            .collect()
    }

    pub fn validate(&self, schema: &Schema) -> Result<()> {
        for t in &self.terms {
            t.resolve(schema)?;
        }
        Ok(())
    }
}

impl Extend<Term> for TermSet {
    fn extend<I: IntoIterator<Item = Term>>(&mut self, iter: I) {
        for t in iter {
            self.push(t);
        }
    }
}

impl FromIterator<Term> for TermSet {
    fn from_iter<I: IntoIterator<Item = Term>>(iter: I) -> Self {
        let mut s = TermSet::new();
        s.extend(iter);
        s
    }
}

impl<'a> IntoIterator for &'a TermSet {
    type Item = &'a Term;
    type IntoIter = std::slice::Iter<'a, Term>;

    fn into_iter(self) -> Self::IntoIter {
        self.terms.iter()
    }
}

impl fmt::Display for TermSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.terms.iter().map(Term::to_string).collect();
        write!(f, "{{{}}}", parts.join(", "))
    }
}

/// All terms of order `1..=max_order` over `main_variables`, plus
/// `extra_terms`, deduplicated and sorted by (order, variable names).
pub fn expand_terms(
    schema: &Schema,
    main_variables: &[&str],
    max_order: usize,
    extra_terms: &[Term],
) -> Result<TermSet> {
    if max_order == 0 {
        return Err(Error::Domain("max_order must be at least 1".into()));
    }
    for v in main_variables {
        schema.variable(v)?;
    }
    for t in extra_terms {
        t.resolve(schema)?;
    }
    let mut vars: Vec<&str> = main_variables.to_vec();
    vars.sort_unstable();
    vars.dedup();

    let mut all: Vec<Term> = Vec::new();
    let mut combo = Vec::new();
    for k in 1..=max_order.min(vars.len()) {
        combinations(&vars, k, 0, &mut combo, &mut all);
    }
    all.extend(extra_terms.iter().cloned());
    all.sort_by(|a, b| {
        a.order()
            .cmp(&b.order())
            .then_with(|| a.variables.cmp(&b.variables))
    });
    Ok(all.into_iter().collect())
}

fn combinations<'a>(
    vars: &[&'a str],
    k: usize,
    start: usize,
    current: &mut Vec<&'a str>,
    out: &mut Vec<Term>,
) {
    if current.len() == k {
        out.push(Term::new(current.iter().copied()).expect("distinct variables"));
        return;
    }
    for i in start..vars.len() {
        current.push(vars[i]);
        combinations(vars, k, i + 1, current, out);
        current.pop();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::cohort::Variable;

    fn schema(names: &[&str]) -> Schema {
        Schema::new(
            names
                .iter()
                .map(|n| Variable::new(*n, ["0", "1"]))
                .collect(),
        )
        .unwrap()
    }

    fn terms(list: &str) -> Vec<Term> {
        TermSet::parse_list(list).unwrap().as_slice().to_vec()
    }

    #[test]
    fn term_equality_ignores_listing_order() {
        assert_eq!(
            "a:b".parse::<Term>().unwrap(),
            "b:a".parse::<Term>().unwrap()
        );
    }

    #[test]
    fn repeated_variable_in_term_is_a_schema_error() {
        assert!(matches!("x:x".parse::<Term>(), Err(Error::Schema(_))));
    }

    #[test]
    fn order_one_has_no_interactions() {
        let s = expand_terms(&schema(&["a", "b"]), &["a", "b"], 1, &[]).unwrap();
        assert_eq!(s.as_slice(), terms("a, b"));
    }

    #[test]
    fn order_two_single_pair() {
        let s = expand_terms(&schema(&["a", "b"]), &["a", "b"], 2, &[]).unwrap();
        assert_eq!(s.as_slice(), terms("a, b, a:b"));
    }

    #[test]
    fn three_variables_order_two_gives_six_terms() {
        let s = expand_terms(&schema(&["a", "b", "c"]), &["c", "a", "b"], 2, &[]).unwrap();
        assert_eq!(s.len(), 3 + 3);
        assert_eq!(s.as_slice(), terms("a, b, c, a:b, a:c, b:c"));
    }

    #[test]
    fn extra_terms_are_deduplicated() {
        let sch = schema(&["a", "b", "c"]);
        let extra = terms("b:a, a:b:c");
        let s = expand_terms(&sch, &["a", "b", "c"], 2, &extra).unwrap();
        assert_eq!(s.len(), 7);
        assert_eq!(s.last().unwrap().order(), 3);
    }

    #[test]
    fn unknown_variable_rejected() {
        assert!(matches!(
            expand_terms(&schema(&["a"]), &["a", "zz"], 1, &[]),
            Err(Error::Schema(_))
        ));
    }

    #[test]
    fn size_matches_binomial_sum() {
        let names = ["a", "b", "c", "d", "e"];
        let sch = schema(&names);
        let binom =
            |n: usize, k: usize| -> usize { (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1)) };
        for max_order in 1..=5 {
            let s = expand_terms(&sch, &names, max_order, &[]).unwrap();
            let expected: usize = (1..=max_order).map(|k| binom(5, k)).sum();
            assert_eq!(s.len(), expected, "max_order {max_order}");
        }
    }

    #[test]
    fn term_set_keeps_insertion_order_and_rejects_duplicates() {
        let mut s = TermSet::new();
        assert!(s.push("b".parse().unwrap()));
        assert!(s.push("a:b".parse().unwrap()));
        assert!(!s.push("b:a".parse().unwrap()));
        assert_eq!(s.pop().unwrap().to_string(), "a:b");
        assert_eq!(s.len(), 1);
    }
}
