//! Greedy interaction selection and the RAILS pipeline.
//!
//! Candidate terms are scored by the pseudo-log-likelihood gain they bring to
//! the propensity model. At each step the significant candidate with the
//! largest gain per added column enters the working set. The selected terms
//! form a stack: when raking fails, the most recently added term is removed
//! from both the propensity model and the calibration constraints, and the
//! weights are rebuilt.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::model::{Cohort, DesignMatrix, MarginTargets, Term, TermSet};
use crate::nps::{base_weights, fit_nps_named, NpsFit, NpsOptions};
use crate::raking::{
    check_constraints, rake, CalibrationDesign, RakingOptions, RakingResult, ResidualReport,
};

/// The non-probability cohort and the probability cohort with its design
/// weights.
#[derive(Debug, Clone, Copy)]
pub struct Cohorts<'a> {
    pub np: &'a Cohort,
    pub p: &'a Cohort,
}

impl<'a> Cohorts<'a> {
    pub fn new(np: &'a Cohort, p: &'a Cohort) -> Result<Self> {
        if np.schema() != p.schema() {
            return Err(Error::Schema(
                "cohorts are encoded against different schemas".into(),
            ));
        }
        if p.design_weight().is_none() {
            return Err(Error::Domain(
                "the probability cohort has no design weights".into(),
            ));
        }
        Ok(Cohorts { np, p })
    }

    fn design_weights(&self) -> &'a [f64] {
        self.p.design_weight().expect("checked in Cohorts::new")
    }
}

/// A propensity fit on one term set, with the design matrices it used.
#[derive(Debug, Clone)]
pub struct PropensityFit {
    pub terms: TermSet,
    pub x_np: DesignMatrix,
    pub x_p: DesignMatrix,
    pub fit: NpsFit,
}

impl PropensityFit {
    /// Retained (non-aliased) columns, intercept included.
    pub fn rank(&self) -> usize {
        self.x_p.ncols()
    }

    pub fn base_weights(&self) -> Vec<f64> {
        base_weights(&self.fit, self.x_np.values()).expect("shapes agree by construction")
    }
}

/// Fits the nested propensity model on `terms`. Column aliasing is decided on
/// the probability cohort, the only one entering the Hessian.
pub fn fit_propensity(
    cohorts: Cohorts<'_>,
    terms: &TermSet,
    opts: &NpsOptions,
) -> Result<PropensityFit> {
    let (x_p, x_np) = DesignMatrix::build_shared(cohorts.p, cohorts.np, terms)?;
    let fit = fit_nps_named(
        x_np.values(),
        x_p.values(),
        cohorts.design_weights(),
        opts,
        &x_p.column_names(),
    )?;
    Ok(PropensityFit {
        terms: terms.clone(),
        x_np,
        x_p,
        fit,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CandidateScore {
    pub term: Term,
    pub delta_loglik: f64,
    /// Non-aliased columns the term adds.
    pub df: usize,
    pub p_value: f64,
    pub admissible: bool,
    /// Why the candidate is inadmissible, if it is.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

impl CandidateScore {
    fn inadmissible(term: &Term, reason: String) -> Self {
        CandidateScore {
            term: term.clone(),
            delta_loglik: 0.0,
            df: 0,
            p_value: 1.0,
            admissible: false,
            reason: Some(reason),
        }
    }

    /// Average gain per added column.
    pub fn rate(&self) -> f64 {
        self.delta_loglik / self.df as f64
    }
}

/// Upper-tail chi-square probability `Pr(χ²_df ≥ 2Δℓ)`.
pub fn lr_p_value(delta_loglik: f64, df: usize) -> f64 {
    if df == 0 {
        return 1.0;
    }
    let stat = (2.0 * delta_loglik).max(0.0);
    let chi = ChiSquared::new(df as f64).expect("df is positive");
    chi.sf(stat).clamp(0.0, 1.0)
}

fn score_against(
    cohorts: Cohorts<'_>,
    null: &PropensityFit,
    term: &Term,
    opts: &NpsOptions,
) -> CandidateScore {
    let alt = match fit_propensity(cohorts, &null.terms.with(term), opts) {
        Ok(alt) => alt,
        Err(e) => return CandidateScore::inadmissible(term, e.to_string()),
    };
    if !alt.fit.converged {
        return CandidateScore::inadmissible(term, "propensity fit did not converge".into());
    }
    let df = alt.rank().saturating_sub(null.rank());
    if df == 0 {
        return CandidateScore::inadmissible(term, "all columns aliased".into());
    }
    let delta = alt.fit.loglik - null.fit.loglik;
    CandidateScore {
        term: term.clone(),
        delta_loglik: delta,
        df,
        p_value: lr_p_value(delta, df),
        admissible: true,
        reason: None,
    }
}

/// Scores every pool term against the propensity fit on `working`. Terms are
/// refitted independently and in parallel; the output follows pool order.
pub fn rank_candidates(
    cohorts: Cohorts<'_>,
    working: &TermSet,
    pool: &TermSet,
    opts: &NpsOptions,
) -> Result<Vec<CandidateScore>> {
    if let Some(t) = pool.iter().find(|t| working.contains(t)) {
        return Err(Error::Domain(format!(
            "`{t}` is both in the working set and the pool"
        )));
    }
    let null = fit_propensity(cohorts, working, opts)?;
    Ok(rank_against(cohorts, &null, pool, opts))
}

fn rank_against(
    cohorts: Cohorts<'_>,
    null: &PropensityFit,
    pool: &TermSet,
    opts: &NpsOptions,
) -> Vec<CandidateScore> {
    pool.as_slice()
        .par_iter()
        .map(|t| score_against(cohorts, null, t, opts))
        .collect()
}

/// Index of the candidate to add: among admissible candidates with
/// `p < alpha`, the largest `Δℓ/ν`, then the largest `Δℓ`, then the earliest.
pub fn pick_candidate(scores: &[CandidateScore], alpha: f64) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, s) in scores.iter().enumerate() {
        if !(s.admissible && s.p_value < alpha) {
            continue;
        }
        best = match best {
            None => Some(i),
            Some(b) => {
                let cur = &scores[b];
                let better = s.rate() > cur.rate()
                    || (s.rate() == cur.rate() && s.delta_loglik > cur.delta_loglik);
                Some(if better { i } else { b })
            }
        };
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SelectionOptions {
    pub alpha: f64,
    pub max_added_terms: Option<usize>,
    /// Terms LIFO never removes; `None` protects the main effects.
    pub protected_terms: Option<TermSet>,
    /// Relax constraints by LIFO when raking fails. Without it a raking
    /// failure ends the pipeline.
    pub lifo: bool,
}

impl Default for SelectionOptions {
    fn default() -> Self {
        SelectionOptions {
            alpha: 0.05,
            max_added_terms: None,
            protected_terms: None,
            lifo: true,
        }
    }
}

impl SelectionOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!(
                "alpha {} must lie in (0, 1)",
                self.alpha
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    NoSignificantCandidate,
    PoolExhausted,
    CapReached,
}

#[derive(Debug, Clone, Serialize)]
pub struct SelectionStep {
    pub term: Term,
    pub delta_loglik: f64,
    pub df: usize,
    pub p_value: f64,
    pub loglik: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SelectionTrace {
    /// `ℓ*` of the starting working set.
    pub initial_loglik: f64,
    pub steps: Vec<SelectionStep>,
    pub final_working_set: TermSet,
    pub stopped_reason: StopReason,
    /// Propensity fits performed, the starting fit included.
    pub fits: usize,
}

impl SelectionTrace {
    pub fn added_terms(&self) -> Vec<Term> {
        self.steps.iter().map(|s| s.term.clone()).collect()
    }
}

/// Forward selection from `working` over `pool`.
pub fn greedy_select(
    cohorts: Cohorts<'_>,
    working: &TermSet,
    pool: &TermSet,
    nps_opts: &NpsOptions,
    sel_opts: &SelectionOptions,
) -> Result<SelectionTrace> {
    sel_opts.validate()?;
    if let Some(t) = pool.iter().find(|t| working.contains(t)) {
        return Err(Error::Domain(format!(
            "`{t}` is both in the working set and the pool"
        )));
    }
    let mut current = fit_propensity(cohorts, working, nps_opts)?;
    let mut fits = 1;
    let mut remaining = pool.clone();
    let mut steps = Vec::new();
    let initial_loglik = current.fit.loglik;
    let stopped_reason = loop {
        if remaining.is_empty() {
            break StopReason::PoolExhausted;
        }
        if sel_opts
            .max_added_terms
            .is_some_and(|cap| steps.len() >= cap)
        {
            break StopReason::CapReached;
        }
        let scores = rank_against(cohorts, &current, &remaining, nps_opts);
        fits += scores.len();
        let Some(i) = pick_candidate(&scores, sel_opts.alpha) else {
            break StopReason::NoSignificantCandidate;
        };
        let chosen = &scores[i];
        let next = fit_propensity(cohorts, &current.terms.with(&chosen.term), nps_opts)?;
        fits += 1;
        steps.push(SelectionStep {
            term: chosen.term.clone(),
            delta_loglik: chosen.delta_loglik,
            df: chosen.df,
            p_value: chosen.p_value,
            loglik: next.fit.loglik,
        });
        remaining.remove(&chosen.term);
        current = next;
    };
    Ok(SelectionTrace {
        initial_loglik,
        steps,
        final_working_set: current.terms,
        stopped_reason,
        fits,
    })
}

/// Outcome of one raking attempt.
#[derive(Debug, Clone, Serialize)]
pub struct RakingAttempt {
    pub terms: TermSet,
    /// Terms of `terms` that had margin targets.
    pub calibrated_terms: TermSet,
    pub converged: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

#[derive(Debug, Clone)]
pub struct RailsResult {
    pub weights: Vec<f64>,
    /// Inverse-propensity weights of the final working set.
    pub base_weights: Vec<f64>,
    pub propensity: PropensityFit,
    /// `None` when the last attempt failed before sweeping (structural zero
    /// or zero target).
    pub raking: Option<RakingResult>,
    pub residuals: Option<ResidualReport>,
    pub selection: SelectionTrace,
    pub removed_by_lifo: Vec<Term>,
    pub attempts: Vec<RakingAttempt>,
    pub converged: bool,
}

impl RailsResult {
    pub fn final_terms(&self) -> &TermSet {
        &self.propensity.terms
    }
}

fn protected_set(main_terms: &TermSet, opts: &SelectionOptions) -> TermSet {
    opts.protected_terms
        .clone()
        .unwrap_or_else(|| main_terms.main_effects())
}

/// Builds weights for the working set of `trace`, popping the latest
/// non-protected terms while raking fails (when `sel_opts.lifo` is set).
pub fn calibrate_selected(
    cohorts: Cohorts<'_>,
    targets: &MarginTargets,
    main_terms: &TermSet,
    trace: SelectionTrace,
    nps_opts: &NpsOptions,
    rake_opts: &RakingOptions,
    sel_opts: &SelectionOptions,
) -> Result<RailsResult> {
    sel_opts.validate()?;
    targets.validate(cohorts.np.schema())?;
    let protected = protected_set(main_terms, sel_opts);
    let mut working = trace.final_working_set.clone();
    let mut removed = Vec::new();
    let mut attempts = Vec::new();
    loop {
        let propensity = fit_propensity(cohorts, &working, nps_opts)?;
        let base = propensity.base_weights();
        let calibrated: TermSet = working
            .iter()
            .filter(|t| targets.has_term(t))
            .cloned()
            .collect();
        let design = CalibrationDesign::new(cohorts.np, targets, &calibrated)?;
        let (raking, failure) = match rake(&base, &design, rake_opts) {
            Ok(r) if r.converged => (Some(r), None),
            Ok(r) => {
                let msg = format!("raking did not converge in {} passes", r.passes);
                (Some(r), Some(msg))
            }
            Err(e) if e.is_raking_failure() => (None, Some(e.to_string())),
            Err(e) => return Err(e),
        };
        attempts.push(RakingAttempt {
            terms: working.clone(),
            calibrated_terms: calibrated,
            converged: failure.is_none(),
            failure: failure.clone(),
        });
        let poppable = working.iter().rposition(|t| !protected.contains(t));
        if failure.is_none() || !sel_opts.lifo || poppable.is_none() {
            let converged = failure.is_none();
            let weights = raking
                .as_ref()
                .map_or_else(|| base.clone(), |r| r.weights.clone());
            let residuals = Some(check_constraints(
                &weights,
                &design,
                rake_opts.absolute_floor,
            ));
            return Ok(RailsResult {
                weights,
                base_weights: base,
                propensity,
                raking,
                residuals,
                selection: trace,
                removed_by_lifo: removed,
                attempts,
                converged,
            });
        }
        let term = working.as_slice()[poppable.expect("checked above")].clone();
        working.remove(&term);
        removed.push(term);
    }
}

/// Full pipeline: greedy selection from `main_terms` over `candidate_pool`,
/// then propensity weighting and raking with LIFO relaxation.
#[allow(clippy::too_many_arguments)]
pub fn rails_fit(
    np_cohort: &Cohort,
    p_cohort: &Cohort,
    targets: &MarginTargets,
    main_terms: &TermSet,
    candidate_pool: &TermSet,
    nps_opts: &NpsOptions,
    rake_opts: &RakingOptions,
    sel_opts: &SelectionOptions,
) -> Result<RailsResult> {
    let cohorts = Cohorts::new(np_cohort, p_cohort)?;
    main_terms.validate(np_cohort.schema())?;
    candidate_pool.validate(np_cohort.schema())?;
    let pool: TermSet = candidate_pool
        .iter()
        .filter(|t| !main_terms.contains(t))
        .cloned()
        .collect();
    let trace = greedy_select(cohorts, main_terms, &pool, nps_opts, sel_opts)?;
    calibrate_selected(
        cohorts, targets, main_terms, trace, nps_opts, rake_opts, sel_opts,
    )
}
