//! Synthetic populations and cohort draws.

use std::sync::Arc;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;

use super::scenario::ScenarioSpec;
use crate::error::{Error, Result};
use crate::model::{Cohort, MarginTargets, Schema, TermSet, Variable};
use crate::numeric::sigmoid;

pub const VARIABLES: [&str; 5] = ["x1", "x2", "x3", "x4", "x5"];
pub const X4_PROBS: [f64; 4] = [0.277, 0.287, 0.431, 0.005];
const PARETO_SHAPE: f64 = 8.0;
const PARETO_LOW: f64 = 1.0;
const PARETO_HIGH: f64 = 300.0;
/// Relative accuracy of the tuned mean inclusion probabilities.
pub const SIZE_TOLERANCE: f64 = 0.01;

/// Deterministic seed for stream `stream` of `master` (splitmix64 finalizer).
pub fn derive_seed(master: u64, stream: u64) -> u64 {
    let mut z = master ^ stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone)]
pub struct SimulatedPopulation {
    pub spec: ScenarioSpec,
    pub schema: Arc<Schema>,
    /// Level codes of `x1..x5`, one column per variable.
    pub codes: Vec<Vec<u32>>,
    pub p: Vec<f64>,
    pub y: Vec<f64>,
    pub pi_np: Vec<f64>,
    pub pi_p: Vec<f64>,
    /// Intercepts after tuning: outcome, non-probability, probability.
    pub intercepts: [f64; 3],
    pub prevalence: f64,
}

impl SimulatedPopulation {
    pub fn size(&self) -> usize {
        self.y.len()
    }

    pub fn cohort(&self) -> Cohort {
        Cohort::from_codes(self.schema.clone(), self.codes.clone()).expect("codes match the schema")
    }

    /// Population totals of every term in `terms`.
    pub fn margins(&self, terms: &TermSet) -> Result<MarginTargets> {
        MarginTargets::tabulate(&self.cohort(), terms, None)
    }

    fn subset(&self, rows: &[usize]) -> Cohort {
        let codes = self
            .codes
            .iter()
            .map(|col| rows.iter().map(|&r| col[r]).collect())
            .collect();
        Cohort::from_codes(self.schema.clone(), codes).expect("codes match the schema")
    }
}

pub fn schema(bins: super::scenario::Bins) -> Schema {
    let levels = |n: usize| (0..n).map(|i| i.to_string()).collect::<Vec<_>>();
    Schema::new(vec![
        Variable::new("x1", levels(bins.x1)),
        Variable::new("x2", levels(2)),
        Variable::new("x3", levels(bins.x3)),
        Variable::new("x4", levels(4)),
        Variable::new("x5", levels(2)),
    ])
    .expect("fixed schema is valid")
}

/// Codes `values` into `bins` groups at their empirical quantiles.
pub fn quantile_bins(values: &[f64], bins: usize) -> Vec<u32> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let cuts: Vec<f64> = (1..bins)
        .map(|k| sorted[(k * n / bins).min(n - 1)])
        .collect();
    values
        .iter()
        .map(|v| cuts.iter().filter(|&&c| *v >= c).count() as u32)
        .collect()
}

fn truncated_pareto(u: f64) -> f64 {
    let tail = (PARETO_LOW / PARETO_HIGH).powf(PARETO_SHAPE);
    PARETO_LOW / ((1.0 - u) + u * tail).powf(1.0 / PARETO_SHAPE)
}

/// Linear predictors without intercept for the outcome, non-probability and
/// probability models.
fn predictors(spec: &ScenarioSpec, x: [u32; 5]) -> [f64; 3] {
    let [x1, x2, x3, _, x5] = x.map(f64::from);
    let ind = |v: u32, j: u32| f64::from(u8::from(v == j));
    let common = |c: &[f64; 12]| {
        let mut eta = c[1] * x1 + c[2] * x2;
        for j in 1..=3 {
            eta += c[2 + j as usize] * ind(x[2], j) + c[7 + j as usize] * ind(x[3], j);
        }
        eta + c[11] * x5
    };
    let a = &spec.alpha;
    let b = &spec.beta;
    let g = &spec.gamma;
    [
        common(a) + a[6] * x1 * x2 + a[7] * x2 * x3,
        common(b) + b[6] * x1 * x2 + b[7] * x2 * x3,
        common(g) + g[6] * x1 * x3 + g[7] * x2 * f64::from(u8::from(x3 > 0.0)),
    ]
}

/// Intercept `c` with `mean(σ(c + eta)) = target`, by bisection.
pub fn tune_intercept(eta: &[f64], target: f64) -> Result<f64> {
    if !(target > 0.0 && target < 1.0) {
        return Err(Error::Config(format!(
            "target mean probability {target} outside (0, 1)"
        )));
    }
    let mean = |c: f64| eta.iter().map(|e| sigmoid(c + e)).sum::<f64>() / eta.len() as f64;
    let (mut lo, mut hi) = (-60.0, 60.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mean(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-12 {
            break;
        }
    }
    let c = 0.5 * (lo + hi);
    let got = mean(c);
    if (got - target).abs() > SIZE_TOLERANCE * target {
        return Err(Error::Config(format!(
            "cannot tune intercept: mean probability {got} for target {target}"
        )));
    }
    Ok(c)
}

pub fn generate_population(spec: &ScenarioSpec) -> Result<SimulatedPopulation> {
    spec.validate()?;
    let n = spec.sizes.population;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, 0));
    let normal = Normal::new(20.0, 5.0).expect("valid normal");
    let x4_dist = WeightedIndex::new(X4_PROBS).expect("valid probabilities");
    let mut raw1 = Vec::with_capacity(n);
    let mut x2 = Vec::with_capacity(n);
    let mut raw3 = Vec::with_capacity(n);
    let mut x4 = Vec::with_capacity(n);
    let mut x5 = Vec::with_capacity(n);
    for _ in 0..n {
        raw1.push(normal.sample(&mut rng));
        x2.push(u32::from(rng.random_bool(0.65)));
        raw3.push(truncated_pareto(rng.random::<f64>()));
        let c = x4_dist.sample(&mut rng) as u32;
        x4.push(c);
        x5.push(u32::from(
            rng.random_bool((0.1 * f64::from(c)).clamp(0.0, 1.0)),
        ));
    }
    let x1 = quantile_bins(&raw1, spec.bins.x1);
    let x3 = quantile_bins(&raw3, spec.bins.x3);
    let mut etas = [
        Vec::with_capacity(n),
        Vec::with_capacity(n),
        Vec::with_capacity(n),
    ];
    for i in 0..n {
        let e = predictors(spec, [x1[i], x2[i], x3[i], x4[i], x5[i]]);
        for k in 0..3 {
            etas[k].push(e[k]);
        }
    }
    let [lo, hi] = spec.prevalence_range;
    let targets = [
        0.5 * (lo + hi),
        spec.sizes.np as f64 / n as f64,
        spec.sizes.p as f64 / n as f64,
    ];
    let mut intercepts = [0.0; 3];
    let mut probs: [Vec<f64>; 3] = Default::default();
    for k in 0..3 {
        intercepts[k] = tune_intercept(&etas[k], targets[k])?;
        probs[k] = etas[k].iter().map(|e| sigmoid(intercepts[k] + e)).collect();
        if probs[k]
            .iter()
            .all(|&p| !(1e-12..=1.0 - 1e-12).contains(&p))
        {
            return Err(Error::Config(
                "coefficients give degenerate probabilities".into(),
            ));
        }
    }
    let [p, pi_np, pi_p] = probs;
    let y: Vec<f64> = p
        .iter()
        .map(|&pr| f64::from(u8::from(rng.random_bool(pr))))
        .collect();
    let prevalence = y.iter().sum::<f64>() / n as f64;
    if !(prevalence > 0.0 && prevalence < 1.0) {
        return Err(Error::Config(format!(
            "population prevalence {prevalence} is degenerate"
        )));
    }
    Ok(SimulatedPopulation {
        spec: spec.clone(),
        schema: Arc::new(schema(spec.bins)),
        codes: vec![x1, x2, x3, x4, x5],
        p,
        y,
        pi_np,
        pi_p,
        intercepts,
        prevalence,
    })
}

#[derive(Debug, Clone)]
pub struct DrawnCohorts {
    /// Non-probability cohort, carrying outcomes.
    pub np: Cohort,
    /// Probability cohort, carrying design weights `1/π^P`.
    pub p: Cohort,
    pub np_rows: Vec<usize>,
    pub p_rows: Vec<usize>,
    /// Draws discarded because a cohort came out empty.
    pub redraws: usize,
}

/// Independent Poisson draws of both cohorts.
pub fn draw_cohorts(pop: &SimulatedPopulation, seed: u64) -> Result<DrawnCohorts> {
    for attempt in 0..1000u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, attempt));
        let mut np_rows = Vec::new();
        let mut p_rows = Vec::new();
        for i in 0..pop.size() {
            if rng.random::<f64>() < pop.pi_np[i] {
                np_rows.push(i);
            }
            if rng.random::<f64>() < pop.pi_p[i] {
                p_rows.push(i);
            }
        }
        if np_rows.is_empty() || p_rows.is_empty() {
            continue;
        }
        let np = pop
            .subset(&np_rows)
            .with_outcome(np_rows.iter().map(|&r| pop.y[r]).collect())?;
        let p = pop
            .subset(&p_rows)
            .with_design_weights(p_rows.iter().map(|&r| 1.0 / pop.pi_p[r]).collect())?;
        return Ok(DrawnCohorts {
            np,
            p,
            np_rows,
            p_rows,
            redraws: attempt as usize,
        });
    }
    Err(Error::Numeric("every cohort draw came out empty".into()))
}
