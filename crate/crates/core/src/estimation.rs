//! Prevalence estimation from calibrated weights.
//!
//! The ratio estimator `μ̂ = Σ wᵢyᵢ / Σ wᵢ` with its Taylor-linearized
//! variance
//!
//! ```text
//! V̂ = Σ wᵢ² (yᵢ − μ̂)² / (Σ wᵢ)²
//! ```
//!
//! assumes independent inclusions, so only the diagonal of the inclusion
//! covariance contributes.

use nalgebra::DMatrix;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::nps::{fit_nps, propensities, NpsFit, NpsOptions};

/// Lower bound applied to estimated completeness probabilities.
pub const COMPLETENESS_FLOOR: f64 = 1e-6;

fn check_inputs(weights: &[f64], y: &[f64]) -> Result<()> {
    if weights.is_empty() {
        return Err(Error::Domain("no observations".into()));
    }
    if weights.len() != y.len() {
        return Err(Error::Shape(format!(
            "{} weights for {} outcomes",
            weights.len(),
            y.len()
        )));
    }
    if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
        return Err(Error::Domain(format!(
            "weight {w} is not positive and finite"
        )));
    }
    if let Some(v) = y.iter().find(|v| !v.is_finite()) {
        return Err(Error::Domain(format!("outcome {v} is not finite")));
    }
    Ok(())
}

pub fn weighted_prevalence(weights: &[f64], y: &[f64]) -> Result<f64> {
    check_inputs(weights, y)?;
    Ok(ratio(weights, y))
}

fn ratio(weights: &[f64], y: &[f64]) -> f64 {
    let num: f64 = weights.iter().zip(y).map(|(w, y)| w * y).sum();
    let den: f64 = weights.iter().sum();
    num / den
}

/// Linearized variance of [`weighted_prevalence`].
pub fn prevalence_variance(weights: &[f64], y: &[f64]) -> Result<f64> {
    check_inputs(weights, y)?;
    let mu = ratio(weights, y);
    let den: f64 = weights.iter().sum();
    let num: f64 = weights
        .iter()
        .zip(y)
        .map(|(w, y)| (w * (y - mu)).powi(2))
        .sum();
    Ok(num / (den * den))
}

/// Wald interval `estimate ± z·√variance`, not clipped to `[0, 1]`.
pub fn confidence_interval(estimate: f64, variance: f64, level: f64) -> Result<(f64, f64)> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Domain(format!(
            "confidence level {level} must lie in (0, 1)"
        )));
    }
    if !(variance >= 0.0 && variance.is_finite()) {
        return Err(Error::Domain(format!(
            "variance {variance} must be nonnegative"
        )));
    }
    let z = normal_quantile(0.5 * (1.0 + level));
    let half = z * variance.sqrt();
    Ok((estimate - half, estimate + half))
}

pub(crate) fn normal_quantile(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PrevalenceEstimate {
    pub estimate: f64,
    pub variance: f64,
    pub std_error: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub level: f64,
    /// `(Σw)² / Σw²`.
    pub n_effective: f64,
    /// `Σw`, the estimated population size.
    pub weight_total: f64,
    pub n: usize,
}

/// Point estimate, variance and Wald interval in one pass.
pub fn estimate_prevalence(weights: &[f64], y: &[f64], level: f64) -> Result<PrevalenceEstimate> {
    let estimate = weighted_prevalence(weights, y)?;
    let variance = prevalence_variance(weights, y)?;
    let (ci_low, ci_high) = confidence_interval(estimate, variance, level)?;
    let total: f64 = weights.iter().sum();
    let sq: f64 = weights.iter().map(|w| w * w).sum();
    Ok(PrevalenceEstimate {
        estimate,
        variance,
        std_error: variance.sqrt(),
        ci_low,
        ci_high,
        level,
        n_effective: total * total / sq,
        weight_total: total,
        n: weights.len(),
    })
}

#[derive(Debug, Clone)]
pub struct DoubleWeighting {
    /// Row indices of the complete rows, in cohort order.
    pub rows: Vec<usize>,
    /// Adjusted weights of those rows, summing to `N`.
    pub weights: Vec<f64>,
    /// Estimated completeness probability of every complete row.
    pub completeness: Vec<f64>,
    /// Some probability was raised to [`COMPLETENESS_FLOOR`].
    pub floored: bool,
    /// `None` when every row is complete and no model was needed.
    pub fit: Option<NpsFit>,
}

/// Divides the weights of complete rows by their estimated completeness
/// probability and rescales them to `population_size`.
///
/// Completeness is modelled by ordinary logistic regression on `x_missing`
/// within the cohort. That likelihood is the pseudo-likelihood with the
/// complete rows as the sample and the whole cohort, at unit weight, as the
/// reference.
pub fn double_weighting(
    weights: &[f64],
    complete: &[bool],
    x_missing: &DMatrix<f64>,
    population_size: f64,
) -> Result<DoubleWeighting> {
    if weights.len() != complete.len() || x_missing.nrows() != weights.len() {
        return Err(Error::Shape(format!(
            "{} weights, {} completeness flags, {} design rows",
            weights.len(),
            complete.len(),
            x_missing.nrows()
        )));
    }
    if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
        return Err(Error::Domain(format!(
            "weight {w} is not positive and finite"
        )));
    }
    if !(population_size.is_finite() && population_size > 0.0) {
        return Err(Error::Domain(format!(
            "population size {population_size} must be positive"
        )));
    }
    let rows: Vec<usize> = (0..complete.len()).filter(|&i| complete[i]).collect();
    if rows.is_empty() {
        return Err(Error::Domain("no complete rows".into()));
    }
    let (completeness, floored, fit) = if rows.len() == complete.len() {
        (vec![1.0; rows.len()], false, None)
    } else {
        let x_complete = x_missing.select_rows(&rows);
        let fit = fit_nps(
            &x_complete,
            x_missing,
            &vec![1.0; weights.len()],
            &NpsOptions::default(),
        )?;
        if !fit.converged {
            return Err(Error::Numeric("completeness model did not converge".into()));
        }
        let raw = propensities(&fit, &x_complete)?;
        let floored = raw.iter().any(|&p| p < COMPLETENESS_FLOOR);
        let probs = raw.into_iter().map(|p| p.max(COMPLETENESS_FLOOR)).collect();
        (probs, floored, Some(fit))
    };
    let mut adjusted: Vec<f64> = rows
        .iter()
        .zip(&completeness)
        .map(|(&r, p)| weights[r] / p)
        .collect();
    let scale = population_size / adjusted.iter().sum::<f64>();
    for w in &mut adjusted {
        *w *= scale;
    }
    Ok(DoubleWeighting {
        rows,
        weights: adjusted,
        completeness,
        floored,
        fit,
    })
}
