//! Nested propensity score.
//!
//! The probability of membership in the non-probability cohort is modelled
//! as `π(x) = 1 / (1 + exp(-xᵀθ))`. The population log-likelihood needs a sum
//! over the whole population; it is replaced by its design-weighted estimate
//! from the probability cohort, giving the pseudo-log-likelihood
//!
//! ```text
//! ℓ*(θ) = Σ_{i∈NP} xᵢᵀθ − Σ_{i∈P} dᵢ log(1 + exp(xᵢᵀθ))
//! ```
//!
//! which is maximized by Newton–Raphson with step halving. The fitted
//! inverse propensities `1 + exp(-xᵢᵀθ̂)` become the base weights of the
//! non-probability cohort.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::qr::pivoted_qr;
use crate::numeric::{compensated_sum, sigmoid, softplus, softplus_diff};

/// Smallest accepted ratio between the extreme squared Cholesky pivots of
/// the negated Hessian before it is declared singular.
const SINGULAR_RATIO: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NpsOptions {
    pub max_iterations: usize,
    /// Stop once the full Newton step satisfies `‖Δθ‖₂ ≤ step_tolerance`.
    pub step_tolerance: f64,
    /// Stop once `‖S(θ)‖₂ ≤ score_tolerance`.
    pub score_tolerance: f64,
    pub max_step_halvings: usize,
    /// Added to the diagonal of `-H` when solving for the Newton step.
    pub ridge: f64,
}

impl Default for NpsOptions {
    fn default() -> Self {
        NpsOptions {
            max_iterations: 100,
            step_tolerance: 1e-8,
            score_tolerance: 1e-6,
            max_step_halvings: 20,
            ridge: 0.0,
        }
    }
}

impl NpsOptions {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::Config(
                "nps max_iterations must be at least 1".into(),
            ));
        }
        if !(self.step_tolerance > 0.0 && self.score_tolerance > 0.0) {
            return Err(Error::Config("nps tolerances must be positive".into()));
        }
        if !(self.ridge >= 0.0 && self.ridge.is_finite()) {
            return Err(Error::Config(
                "nps ridge must be a nonnegative number".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct NpsFit {
    pub theta: DVector<f64>,
    pub loglik: f64,
    pub iterations: usize,
    pub converged: bool,
    /// `H(θ̂)` without the ridge.
    pub hessian: DMatrix<f64>,
    pub score_norm: f64,
    /// Ridge actually used (copied from the options for reporting).
    pub ridge: f64,
    pub step_halvings: usize,
    /// `ℓ*` after each accepted step, starting with `ℓ*(0)`.
    pub loglik_trace: Vec<f64>,
}

fn check_shapes(p: usize, x_np: &DMatrix<f64>, x_p: &DMatrix<f64>, d_p: &[f64]) -> Result<()> {
    if x_np.ncols() != p || x_p.ncols() != p {
        return Err(Error::Shape(format!(
            "theta has {p} entries, design matrices have {} and {} columns",
            x_np.ncols(),
            x_p.ncols()
        )));
    }
    if x_p.nrows() != d_p.len() {
        return Err(Error::Shape(format!(
            "{} design weights for {} probability-cohort rows",
            d_p.len(),
            x_p.nrows()
        )));
    }
    if let Some(d) = d_p.iter().find(|d| !(d.is_finite() && **d > 0.0)) {
        return Err(Error::Domain(format!("design weight {d} is not positive")));
    }
    Ok(())
}

/// `ℓ*(θ)`, evaluated with an overflow-safe `log(1 + exp(·))`.
pub fn pseudo_log_likelihood(
    theta: &DVector<f64>,
    x_np: &DMatrix<f64>,
    x_p: &DMatrix<f64>,
    d_p: &[f64],
) -> Result<f64> {
    check_shapes(theta.len(), x_np, x_p, d_p)?;
    let v = loglik_unchecked(theta, x_np, x_p, d_p);
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Numeric(format!("pseudo-log-likelihood is {v}")))
    }
}

/// Relative resolution of ℓ* used by the Newton-decrement stopping rule.
const DECREMENT_RESOLUTION: f64 = 1e-13;

fn loglik_unchecked(
    theta: &DVector<f64>,
    x_np: &DMatrix<f64>,
    x_p: &DMatrix<f64>,
    d_p: &[f64],
) -> f64 {
    let np_part = compensated_sum((x_np * theta).iter().copied());
    let p_part = compensated_sum(
        (x_p * theta)
            .iter()
            .zip(d_p)
            .map(|(eta, d)| d * softplus(*eta)),
    );
    np_part - p_part
}

/// `ℓ*(θ + step) − ℓ*(θ)` summed term by term, so gains far below the
/// rounding of `ℓ*` itself keep their sign.
fn loglik_gain(
    theta: &DVector<f64>,
    step: &DVector<f64>,
    x_np: &DMatrix<f64>,
    x_p: &DMatrix<f64>,
    d_p: &[f64],
) -> f64 {
    let np_part = compensated_sum((x_np * step).iter().copied());
    let eta = x_p * theta;
    let p_part = compensated_sum(
        eta.iter()
            .zip((x_p * step).iter())
            .zip(d_p)
            .map(|((t, h), d)| d * softplus_diff(*t, *h)),
    );
    np_part - p_part
}

/// Analytic score `S(θ) = Σ_NP x − Σ_P d π x` and Hessian
/// `H(θ) = −Σ_P d π(1−π) x xᵀ`.
pub fn score_and_hessian(
    theta: &DVector<f64>,
    x_np: &DMatrix<f64>,
    x_p: &DMatrix<f64>,
    d_p: &[f64],
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    check_shapes(theta.len(), x_np, x_p, d_p)?;
    Ok(score_hessian_unchecked(theta, x_np, x_p, d_p))
}

fn score_hessian_unchecked(
    theta: &DVector<f64>,
    x_np: &DMatrix<f64>,
    x_p: &DMatrix<f64>,
    d_p: &[f64],
) -> (DVector<f64>, DMatrix<f64>) {
    let p = theta.len();
    let eta = x_p * theta;
    let mut fitted = DVector::zeros(x_p.nrows());
    let mut curv = DVector::zeros(x_p.nrows());
    for (i, (&e, &d)) in eta.iter().zip(d_p).enumerate() {
        let m = sigmoid(e);
        fitted[i] = d * m;
        curv[i] = d * m * (1.0 - m);
    }
    let mut score = DVector::zeros(p);
    for j in 0..p {
        score[j] = x_np.column(j).sum() - x_p.column(j).dot(&fitted);
    }
    let mut weighted = x_p.clone();
    for (mut row, c) in weighted.row_iter_mut().zip(curv.iter()) {
        row *= *c;
    }
    let mut hessian = -x_p.tr_mul(&weighted);
    // Enforce exact symmetry.
    for i in 0..p {
        for j in 0..i {
            let v = 0.5 * (hessian[(i, j)] + hessian[(j, i)]);
            hessian[(i, j)] = v;
            hessian[(j, i)] = v;
        }
    }
    (score, hessian)
}

/// Solves `(-H + ridge·I) δ = S`, or reports the dependent columns.
fn newton_direction(
    score: &DVector<f64>,
    hessian: &DMatrix<f64>,
    ridge: f64,
    names: &dyn Fn(usize) -> String,
) -> Result<DVector<f64>> {
    let p = score.len();
    let mut a = -hessian.clone();
    for j in 0..p {
        a[(j, j)] += ridge;
    }
    let singular = |a: &DMatrix<f64>, fallback: Option<usize>| {
        let qr = pivoted_qr(a, &[], 1e-10);
        let mut cols: Vec<usize> = qr.dropped;
        if cols.is_empty() {
            cols.extend(fallback);
        }
        Error::SingularHessian {
            columns: cols.into_iter().map(names).collect(),
        }
    };
    match a.clone().cholesky() {
        Some(chol) => {
            let diag: Vec<f64> = chol.l_dirty().diagonal().iter().map(|v| v * v).collect();
            let max = diag.iter().cloned().fold(0.0, f64::max);
            let (argmin, min) =
                diag.iter()
                    .cloned()
                    .enumerate()
                    .fold(
                        (0, f64::INFINITY),
                        |acc, (i, v)| if v < acc.1 { (i, v) } else { acc },
                    );
            if !(max > 0.0) || min < SINGULAR_RATIO * max {
                return Err(singular(&a, Some(argmin)));
            }
            Ok(chol.solve(score))
        }
        None => Err(singular(&a, None)),
    }
}

/// Maximizes `ℓ*` by Newton–Raphson from `θ = 0`.
pub fn fit_nps(
    x_np: &DMatrix<f64>,
    x_p: &DMatrix<f64>,
    d_p: &[f64],
    opts: &NpsOptions,
) -> Result<NpsFit> {
    fit_nps_named(x_np, x_p, d_p, opts, &[])
}

/// As [`fit_nps`], naming columns in singular-Hessian errors with
/// `column_names` (falls back to `column <j>`).
pub fn fit_nps_named(
    x_np: &DMatrix<f64>,
    x_p: &DMatrix<f64>,
    d_p: &[f64],
    opts: &NpsOptions,
    column_names: &[String],
) -> Result<NpsFit> {
    opts.validate()?;
    let p = x_np.ncols();
    if p == 0 {
        return Err(Error::Shape("design matrices have no columns".into()));
    }
    check_shapes(p, x_np, x_p, d_p)?;
    let names = |j: usize| {
        column_names
            .get(j)
            .cloned()
            .unwrap_or_else(|| format!("column {j}"))
    };

    let mut theta = DVector::zeros(p);
    let mut ll = loglik_unchecked(&theta, x_np, x_p, d_p);
    let mut trace = vec![ll];
    let mut converged = false;
    let mut iterations = 0;
    let mut halvings_total = 0;

    while iterations < opts.max_iterations {
        let (score, hessian) = score_hessian_unchecked(&theta, x_np, x_p, d_p);
        if score.norm() <= opts.score_tolerance {
            converged = true;
            break;
        }
        let delta = newton_direction(&score, &hessian, opts.ridge, &names)?;
        let full_norm = delta.norm();
        let decrement = 0.5 * score.dot(&delta);
        iterations += 1;

        let mut step = delta;
        let mut accepted = None;
        for _ in 0..=opts.max_step_halvings {
            let gain = loglik_gain(&theta, &step, x_np, x_p, d_p);
            if gain.is_finite() && gain >= 0.0 {
                accepted = Some((&theta + &step, ll + gain));
                break;
            }
            step *= 0.5;
            halvings_total += 1;
        }
        match accepted {
            Some((cand, cand_ll)) => {
                theta = cand;
                ll = cand_ll;
                trace.push(ll);
            }
            None => {
                // No ascent along the Newton direction: either already at the
                // optimum up to rounding, or stalled. At the optimum the
                // predicted gain of the full step is below what ℓ* resolves.
                converged = full_norm <= opts.step_tolerance
                    || decrement <= DECREMENT_RESOLUTION * (1.0 + ll.abs());
                break;
            }
        }
        if full_norm <= opts.step_tolerance {
            converged = true;
            break;
        }
    }

    let (score, hessian) = score_hessian_unchecked(&theta, x_np, x_p, d_p);
    let score_norm = score.norm();
    if !converged && score_norm <= opts.score_tolerance {
        converged = true;
    }
    if !ll.is_finite() {
        return Err(Error::Numeric(format!(
            "pseudo-log-likelihood diverged to {ll}"
        )));
    }
    Ok(NpsFit {
        theta,
        loglik: ll,
        iterations,
        converged,
        hessian,
        score_norm,
        ridge: opts.ridge,
        step_halvings: halvings_total,
        loglik_trace: trace,
    })
}

/// Inverse fitted propensities `1 + exp(-xᵢᵀθ̂)` for the rows of `x_np`.
pub fn base_weights(fit: &NpsFit, x_np: &DMatrix<f64>) -> Result<Vec<f64>> {
    if x_np.ncols() != fit.theta.len() {
        return Err(Error::Shape(format!(
            "fit has {} coefficients, design matrix has {} columns",
            fit.theta.len(),
            x_np.ncols()
        )));
    }
    Ok((x_np * &fit.theta)
        .iter()
        .map(|eta| 1.0 + (-eta).exp())
        .collect())
}

/// Fitted propensities `π̂ᵢ` for the rows of `x`.
pub fn propensities(fit: &NpsFit, x: &DMatrix<f64>) -> Result<Vec<f64>> {
    if x.ncols() != fit.theta.len() {
        return Err(Error::Shape(format!(
            "fit has {} coefficients, design matrix has {} columns",
            fit.theta.len(),
            x.ncols()
        )));
    }
    Ok((x * &fit.theta).iter().map(|eta| sigmoid(*eta)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::logit;

    fn ones(n: usize) -> DMatrix<f64> {
        DMatrix::from_element(n, 1, 1.0)
    }

    #[test]
    fn zero_theta_gives_log_two_per_unit_weight() {
        let x_np = ones(3);
        let x_p = ones(4);
        let d = [1.0, 2.0, 3.0, 4.0];
        let v = pseudo_log_likelihood(&DVector::zeros(1), &x_np, &x_p, &d).unwrap();
        assert!((v - (-10.0 * 2f64.ln())).abs() < 1e-12);
        assert!((v + 6.931_471_805_599_453).abs() < 1e-12);
    }

    #[test]
    fn saturated_linear_predictor_stays_finite() {
        let x_np = ones(1);
        let x_p = ones(2);
        let theta = DVector::from_element(1, 1e6);
        let v = pseudo_log_likelihood(&theta, &x_np, &x_p, &[1.0, 1.0]).unwrap();
        assert!(v.is_finite());
        assert!((v - (1e6 - 2e6)).abs() < 1e-6);
    }

    #[test]
    fn score_and_hessian_at_zero() {
        let x_np = DMatrix::from_row_slice(2, 2, &[1., 1., 1., 0.]);
        let x_p = DMatrix::from_row_slice(3, 2, &[1., 0., 1., 1., 1., 1.]);
        let d = [2.0, 4.0, 6.0];
        let (s, h) = score_and_hessian(&DVector::zeros(2), &x_np, &x_p, &d).unwrap();
        // Σ_NP x = (2, 1); ½ Σ_P d x = (6, 5).
        assert_eq!(s.as_slice(), &[2.0 - 6.0, 1.0 - 5.0]);
        // -¼ Σ d x xᵀ = -¼ [[12, 10], [10, 10]].
        assert_eq!(h.as_slice(), &[-3.0, -2.5, -2.5, -2.5]);
    }

    #[test]
    fn intercept_only_closed_form() {
        let x_np = ones(50);
        let x_p = ones(100);
        let d = vec![10.0; 100];
        let fit = fit_nps(&x_np, &x_p, &d, &NpsOptions::default()).unwrap();
        assert!(fit.converged);
        assert!(
            (fit.theta[0] - logit(0.05)).abs() < 1e-10,
            "{}",
            fit.theta[0]
        );
        assert!((fit.theta[0] + 2.944_438_979_166_44).abs() < 1e-10);
        let w = base_weights(&fit, &x_np).unwrap();
        assert!(w.iter().all(|w| (w - 20.0).abs() < 1e-8));
    }

    #[test]
    fn loglik_never_decreases_along_iterations() {
        let x_np = DMatrix::from_row_slice(4, 2, &[1., 1., 1., 1., 1., 0., 1., 1.]);
        let x_p = DMatrix::from_row_slice(5, 2, &[1., 0., 1., 1., 1., 0., 1., 0., 1., 1.]);
        let d = [30.0, 5.0, 12.0, 7.0, 2.0];
        let fit = fit_nps(&x_np, &x_p, &d, &NpsOptions::default()).unwrap();
        assert!(fit.converged);
        assert!(fit.loglik_trace.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn duplicated_column_is_singular() {
        let x = DMatrix::from_row_slice(3, 3, &[1., 0., 0., 1., 1., 1., 1., 0., 0.]);
        let err = fit_nps_named(
            &x,
            &x,
            &[1.0, 1.0, 1.0],
            &NpsOptions::default(),
            &["a".into(), "b".into(), "c".into()],
        )
        .unwrap_err();
        match err {
            Error::SingularHessian { columns } => assert_eq!(columns.len(), 1, "{columns:?}"),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn base_weights_at_zero_theta_are_two() {
        let fit = NpsFit {
            theta: DVector::zeros(2),
            loglik: 0.0,
            iterations: 0,
            converged: true,
            hessian: DMatrix::zeros(2, 2),
            score_norm: 0.0,
            ridge: 0.0,
            step_halvings: 0,
            loglik_trace: vec![],
        };
        let x = DMatrix::from_row_slice(2, 2, &[1., 0., 1., 1.]);
        assert_eq!(base_weights(&fit, &x).unwrap(), vec![2.0, 2.0]);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let err =
            pseudo_log_likelihood(&DVector::zeros(2), &ones(2), &ones(2), &[1.0, 1.0]).unwrap_err();
        assert!(matches!(err, Error::Shape(_)));
    }

    #[test]
    fn invalid_options_rejected() {
        let opts = NpsOptions {
            max_iterations: 0,
            ..Default::default()
        };
        assert!(fit_nps(&ones(2), &ones(2), &[1.0, 1.0], &opts).is_err());
    }
}
