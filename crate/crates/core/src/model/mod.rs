//! Cohorts, term algebra and design matrices shared by every stage.

mod cohort;
mod design;
pub mod io;
mod margins;
pub mod qr;
mod term;

pub use cohort::{Cohort, Schema, Variable};
pub use design::{
    expand_columns, ColumnLabel, DesignMatrix, DropReason, DroppedColumn, ALIAS_TOLERANCE,
};
pub use margins::{MarginEntry, MarginTargets, MARGIN_SUM_TOLERANCE};
pub use term::{expand_terms, Term, TermSet};
