//! Monte-Carlo summaries: relative bias, variances, coverage, divergence.

use serde::Serialize;

use super::estimators::{Estimator, EstimatorOutput};
use crate::error::{Error, Result};
use crate::estimation::normal_quantile;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimatorMetrics {
    pub estimator: Estimator,
    pub replications: usize,
    pub converged: usize,
    /// `100 (mean μ̂ − truth) / truth`.
    pub rel_bias_pct: Option<f64>,
    /// Mean of the variance estimates.
    pub avar: Option<f64>,
    /// Sample variance (`n − 1` denominator) of the point estimates.
    pub evar: Option<f64>,
    pub nominal_cp_pct: Option<f64>,
    /// Coverage after recentering each interval by the mean bias.
    pub oracle_cp_pct: Option<f64>,
    pub divergent_pct: f64,
}

/// Aggregates the outputs of one estimator over replications. Divergent
/// replications only enter the divergence rate.
pub fn summarize(
    estimator: Estimator,
    outputs: &[&EstimatorOutput],
    truth: f64,
    level: f64,
) -> Result<EstimatorMetrics> {
    if outputs.is_empty() {
        return Err(Error::Domain("no replications to summarize".into()));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Domain(format!(
            "confidence level {level} must lie in (0, 1)"
        )));
    }
    let estimates: Vec<_> = outputs.iter().filter_map(|o| o.estimate.as_ref()).collect();
    let reps = outputs.len();
    let k = estimates.len();
    let divergent_pct = 100.0 * (reps - k) as f64 / reps as f64;
    if k == 0 {
        return Ok(EstimatorMetrics {
            estimator,
            replications: reps,
            converged: 0,
            rel_bias_pct: None,
            avar: None,
            evar: None,
            nominal_cp_pct: None,
            oracle_cp_pct: None,
            divergent_pct,
        });
    }
    let kf = k as f64;
    let mean = estimates.iter().map(|e| e.estimate).sum::<f64>() / kf;
    let bias = mean - truth;
    let avar = estimates.iter().map(|e| e.variance).sum::<f64>() / kf;
    let evar = (k > 1).then(|| {
        estimates
            .iter()
            .map(|e| (e.estimate - mean).powi(2))
            .sum::<f64>()
            / (kf - 1.0)
    });
    let z = normal_quantile(0.5 * (1.0 + level));
    let covers = |shift: f64| {
        let hits = estimates
            .iter()
            .filter(|e| ((e.estimate - shift) - truth).abs() <= z * e.variance.sqrt())
            .count();
        100.0 * hits as f64 / kf
    };
    Ok(EstimatorMetrics {
        estimator,
        replications: reps,
        converged: k,
        rel_bias_pct: Some(100.0 * bias / truth),
        avar: Some(avar),
        evar,
        nominal_cp_pct: Some(covers(0.0)),
        oracle_cp_pct: Some(covers(bias)),
        divergent_pct,
    })
}
