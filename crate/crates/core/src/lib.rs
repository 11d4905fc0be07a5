//! Synthetic sampling weights for non-probability cohorts.
//!
//! The pipeline combines two external sources:
//!
//! * a probability sample with design weights, used to fit a *nested
//!   propensity score* by maximizing a design-weighted pseudo-likelihood
//!   ([`nps`]); its inverse gives base weights for the non-probability cohort;
//! * population margin totals, used to calibrate those base weights by
//!   multiplicative generalized raking ([`raking`]).
//!
//! Interaction terms are chosen by greedy forward selection on the
//! pseudo-likelihood, and when raking cannot satisfy every constraint the
//! most recently selected term is dropped first ([`selection`]).
//! [`estimation`] turns the final weights into prevalence estimates with
//! linearized variances, and [`simulation`] runs the Monte-Carlo benchmark.

pub mod cli;
pub mod error;
pub mod estimation;
pub mod model;
pub mod nps;
pub(crate) mod numeric;
pub mod raking;
pub mod selection;
pub mod simulation;

pub use error::{Error, Result};
