//! Command-line front end: `fit`, `simulate` and `estimate`.
//!
//! Exit codes: 0 success, 1 input or configuration error, 2 algorithmic
//! non-convergence. Machine outputs (CSV, JSON) carry full precision and are
//! byte-identical across reruns with the same inputs and seed.

use std::collections::{BTreeSet, HashMap};
use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Error, Result};
use crate::estimation::{double_weighting, estimate_prevalence, PrevalenceEstimate};
use crate::model::io::{
    cohort_from_table, infer_schema, RawTable, ID_COLUMN, OUTCOME_COLUMN, WEIGHT_COLUMN,
};
use crate::model::{expand_terms, Cohort, DesignMatrix, MarginTargets, Schema, Term, TermSet};
use crate::nps::NpsOptions;
use crate::numeric::sig4;
use crate::raking::RakingOptions;
use crate::selection::{rails_fit, RailsResult, SelectionOptions};
use crate::simulation::{
    run_simulation, RunOptions, ScenarioName, ScenarioSpec, SimulationOutput, Sizes,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 1;
pub const EXIT_NOT_CONVERGED: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "rails",
    version,
    about = "Calibration weights for non-probability cohorts"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit weights for a non-probability cohort.
    Fit(FitArgs),
    /// Run the Monte-Carlo comparison for a scenario.
    Simulate(SimulateArgs),
    /// Estimate a prevalence from a weights file.
    Estimate(EstimateArgs),
}

/// Option overrides shared by `fit` and `simulate`.
#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    /// Significance level of the interaction selection.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Raking constraint tolerance (maximum relative residual).
    #[arg(long)]
    pub tolerance: Option<f64>,
    /// Highest interaction order in the candidate pool.
    #[arg(long = "max-order")]
    pub max_order: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct FitArgs {
    /// Run configuration (TOML).
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory; overrides the configuration.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Recorded in the report; the fit itself is deterministic.
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub overrides: Overrides,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Scale {
    Desk,
    Full,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    /// Scenario name (S1..S5) or path to a scenario TOML file.
    pub scenario: String,
    /// Run options (TOML): replications, estimators and option blocks.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub scale: Option<Scale>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub overrides: Overrides,
}

#[derive(Debug, Clone, Args)]
pub struct EstimateArgs {
    /// Weights CSV with `_id` and `weight` columns.
    #[arg(long)]
    pub weights: PathBuf,
    /// Cohort CSV.
    #[arg(long)]
    pub cohort: PathBuf,
    /// Outcome column.
    #[arg(long, default_value = OUTCOME_COLUMN)]
    pub outcome: String,
    /// Completeness column (1 = outcome observed); enables double weighting.
    #[arg(long)]
    pub missing: Option<String>,
    /// Terms of the completeness model, e.g. `a,b`. Defaults to every covariate.
    #[arg(long = "missing-terms")]
    pub missing_terms: Option<String>,
    /// Population size the double weights are scaled to. Defaults to the weight total.
    #[arg(long = "population-size")]
    pub population_size: Option<f64>,
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
    /// Also write `estimate.json` here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Term specification of a fit configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TermConfig {
    /// Main effects; every covariate when absent.
    pub mains: Option<Vec<String>>,
    /// Candidate interactions as `a:b` strings; all interactions of the
    /// main-effect variables up to `max_order` when absent.
    pub pool: Option<Vec<String>>,
    pub max_order: usize,
}

impl Default for TermConfig {
    fn default() -> Self {
        TermConfig {
            mains: None,
            pool: None,
            max_order: 2,
        }
    }
}

/// Configuration of `rails fit`. Relative paths resolve against the
/// directory of the configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    pub np_cohort: PathBuf,
    pub p_cohort: PathBuf,
    pub margins: PathBuf,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_level")]
    pub level: f64,
    #[serde(default)]
    pub terms: TermConfig,
    #[serde(default)]
    pub nps: NpsOptions,
    #[serde(default)]
    pub raking: RakingOptions,
    #[serde(default)]
    pub selection: SelectionOptions,
}

fn default_level() -> f64 {
    0.95
}

impl FitConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut cfg: FitConfig =
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.np_cohort, &mut cfg.p_cohort, &mut cfg.margins] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        if let Some(out) = cfg.out.as_mut().filter(|o| o.is_relative()) {
            *out = base.join(&*out);
        }
        Ok(cfg)
    }

    fn apply(&mut self, o: &Overrides) {
        if let Some(a) = o.alpha {
            self.selection.alpha = a;
        }
        if let Some(t) = o.tolerance {
            self.raking.constraint_tolerance = t;
        }
        if let Some(k) = o.max_order {
            self.terms.max_order = k;
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.terms.max_order == 0 {
            return Err(Error::Config("max_order must be at least 1".into()));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::Config("confidence level must lie in (0, 1)".into()));
        }
        self.nps.validate()?;
        self.raking.validate()?;
        self.selection.validate()
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// exit code. Diagnostics go to stderr, summaries to stdout.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
        }
    };
    let result = match cli.command {
        Command::Fit(a) => cmd_fit(&a),
        Command::Simulate(a) => cmd_simulate(&a),
        Command::Estimate(a) => cmd_estimate(&a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

/// Exit code for an error that aborted a command.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Numeric(_)
        | Error::SingularHessian { .. }
        | Error::StructuralZero { .. }
        | Error::ZeroTarget { .. } => EXIT_NOT_CONVERGED,
        _ => EXIT_INPUT,
    }
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(name), contents)?;
    Ok(())
}

fn to_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("reports serialize");
    s.push('\n');
    s
}

// ---------------------------------------------------------------- fit

/// Cohorts and margins of a fit, encoded against one schema.
#[derive(Debug, Clone)]
pub struct FitInputs {
    pub np: Cohort,
    pub p: Cohort,
    pub targets: MarginTargets,
}

/// Reads both cohorts and the margins. Levels are the union of the values
/// seen in the cohorts and the margin cells, so a margin cell no cohort row
/// supports is kept and surfaces as a structural zero during raking.
pub fn load_inputs(np_path: &Path, p_path: &Path, margins_path: &Path) -> Result<FitInputs> {
    let np_table = RawTable::read(np_path)?;
    let p_table = RawTable::read(p_path)?;
    let margins_text = fs::read_to_string(margins_path)?;
    let targets = MarginTargets::from_csv_str(&margins_text, margins_path)?;
    let mut extra: HashMap<String, BTreeSet<String>> = HashMap::new();
    for e in targets.entries() {
        for (v, level) in e.term.variables().iter().zip(&e.cell) {
            extra.entry(v.clone()).or_default().insert(level.clone());
        }
    }
    let schema = Arc::new(infer_schema(&[&np_table, &p_table], &extra)?);
    targets.validate(&schema)?;
    let np = cohort_from_table(&np_table, schema.clone())?;
    let p = cohort_from_table(&p_table, schema)?;
    if p.design_weight().is_none() {
        return Err(Error::Schema(format!(
            "{}: probability cohort needs a `{WEIGHT_COLUMN}` column",
            p_path.display()
        )));
    }
    Ok(FitInputs { np, p, targets })
}

fn parse_terms(list: &[String]) -> Result<TermSet> {
    list.iter().map(|s| s.parse::<Term>()).collect()
}

/// Main effects and candidate pool of `cfg` over `schema`.
pub fn resolve_terms(cfg: &TermConfig, schema: &Schema) -> Result<(TermSet, TermSet)> {
    let mains = match &cfg.mains {
        Some(list) => parse_terms(list)?,
        None => schema.names().map(Term::main).collect(),
    };
    mains.validate(schema)?;
    let pool = match &cfg.pool {
        Some(list) => parse_terms(list)?,
        None => {
            let vars: Vec<&str> = mains
                .iter()
                .filter(|t| t.is_main_effect())
                .map(|t| t.variables()[0].as_str())
                .collect();
            expand_terms(schema, &vars, cfg.max_order, &[])?
                .iter()
                .filter(|t| !mains.contains(t))
                .cloned()
                .collect()
        }
    };
    pool.validate(schema)?;
    if let Some(t) = pool.iter().find(|t| mains.contains(t)) {
        return Err(Error::Config(format!(
            "`{t}` is both a main term and a candidate"
        )));
    }
    Ok((mains, pool))
}

/// `_id,base_weight,weight` with 17 significant digits.
pub fn weights_csv(ids: &[String], base: &[f64], weights: &[f64]) -> String {
    let mut out = String::from("_id,base_weight,weight\n");
    for ((id, b), w) in ids.iter().zip(base).zip(weights) {
        let _ = writeln!(out, "{id},{b:.16e},{w:.16e}");
    }
    out
}

fn weight_diagnostics(w: &[f64]) -> serde_json::Value {
    let sum: f64 = w.iter().sum();
    let sq: f64 = w.iter().map(|v| v * v).sum();
    json!({
        "n": w.len(),
        "sum": sum,
        "min": w.iter().copied().fold(f64::INFINITY, f64::min),
        "max": w.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        "n_effective": sum * sum / sq,
        "design_effect": w.len() as f64 * sq / (sum * sum),
    })
}

fn fit_report(
    cfg: &FitConfig,
    inputs: &FitInputs,
    mains: &TermSet,
    pool: &TermSet,
    r: &RailsResult,
    estimate: Option<&PrevalenceEstimate>,
) -> serde_json::Value {
    let fit = &r.propensity.fit;
    let columns: Vec<_> = r
        .propensity
        .x_np
        .column_names()
        .into_iter()
        .zip(fit.theta.iter())
        .map(|(name, theta)| json!({ "column": name, "theta": theta }))
        .collect();
    let aliased: Vec<String> = r
        .propensity
        .x_p
        .aliased()
        .iter()
        .map(|d| d.column.label.clone())
        .collect();
    json!({
        "command": "fit",
        "converged": r.converged,
        "config": cfg,
        "n_np": inputs.np.n_rows(),
        "n_p": inputs.p.n_rows(),
        "population_size": inputs.targets.population_size(),
        "terms": { "mains": mains, "pool": pool, "final": r.final_terms() },
        "selection": r.selection,
        "removed_by_lifo": r.removed_by_lifo,
        "attempts": r.attempts,
        "propensity": {
            "loglik": fit.loglik,
            "iterations": fit.iterations,
            "converged": fit.converged,
            "score_norm": fit.score_norm,
            "step_halvings": fit.step_halvings,
            "columns": columns,
            "aliased": aliased,
        },
        "raking": r.raking.as_ref().map(|k| json!({ "converged": k.converged, "passes": k.passes })),
        "residuals": r.residuals,
        "base_weights": weight_diagnostics(&r.base_weights),
        "weights": weight_diagnostics(&r.weights),
        "estimate": estimate,
    })
}

fn fit_summary(
    inputs: &FitInputs,
    r: &RailsResult,
    estimate: Option<&PrevalenceEstimate>,
) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "rails fit: {} ({} non-probability rows, {} probability rows)",
        if r.converged {
            "converged"
        } else {
            "NOT converged"
        },
        inputs.np.n_rows(),
        inputs.p.n_rows()
    );
    let added: Vec<String> = r
        .selection
        .added_terms()
        .iter()
        .map(Term::to_string)
        .collect();
    let removed: Vec<String> = r.removed_by_lifo.iter().map(Term::to_string).collect();
    let _ = writeln!(
        s,
        "selected terms:  {}",
        if added.is_empty() {
            "-".into()
        } else {
            added.join(", ")
        }
    );
    let _ = writeln!(
        s,
        "removed by LIFO: {}",
        if removed.is_empty() {
            "-".into()
        } else {
            removed.join(", ")
        }
    );
    let _ = writeln!(s, "final terms:     {}", r.final_terms());
    let _ = writeln!(s, "raking attempts: {}", r.attempts.len());
    if let Some(last) = r.attempts.last().and_then(|a| a.failure.as_ref()) {
        let _ = writeln!(s, "last failure:    {last}");
    }
    if let Some(res) = &r.residuals {
        let _ = writeln!(
            s,
            "max residual {}  weights [{}, {}]  design effect {}",
            sig4(res.max_residual),
            sig4(res.min_weight),
            sig4(res.max_weight),
            sig4(res.design_effect)
        );
    }
    if let Some(e) = estimate {
        let _ = writeln!(
            s,
            "prevalence {}  SE {}  {}% CI [{}, {}]",
            sig4(e.estimate),
            sig4(e.std_error),
            sig4(100.0 * e.level),
            sig4(e.ci_low),
            sig4(e.ci_high)
        );
    }
    s
}

pub fn cmd_fit(args: &FitArgs) -> Result<i32> {
    let mut cfg = FitConfig::load(&args.config)?;
    cfg.apply(&args.overrides);
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &args.out {
        cfg.out = Some(out.clone());
    }
    cfg.validate()?;
    let inputs = load_inputs(&cfg.np_cohort, &cfg.p_cohort, &cfg.margins)?;
    let (mains, pool) = resolve_terms(&cfg.terms, inputs.np.schema())?;
    let r = rails_fit(
        &inputs.np,
        &inputs.p,
        &inputs.targets,
        &mains,
        &pool,
        &cfg.nps,
        &cfg.raking,
        &cfg.selection,
    )?;
    let estimate = inputs
        .np
        .outcome()
        .filter(|_| r.converged)
        .map(|y| estimate_prevalence(&r.weights, y, cfg.level))
        .transpose()?;
    let report = fit_report(&cfg, &inputs, &mains, &pool, &r, estimate.as_ref());
    let summary = fit_summary(&inputs, &r, estimate.as_ref());
    let out = cfg
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from("rails-out"));
    write_file(
        &out,
        "weights.csv",
        &weights_csv(&inputs.np.ids(), &r.base_weights, &r.weights),
    )?;
    write_file(&out, "report.json", &to_json(&report))?;
    write_file(&out, "summary.txt", &summary)?;
    print!("{summary}");
    Ok(if r.converged {
        EXIT_OK
    } else {
        EXIT_NOT_CONVERGED
    })
}

// ----------------------------------------------------------- simulate

/// Scenario named by `arg`: a builtin name or a TOML file.
pub fn resolve_scenario(arg: &str) -> Result<ScenarioSpec> {
    match arg.parse::<ScenarioName>() {
        Ok(name) => Ok(ScenarioSpec::builtin(name)),
        Err(e) => {
            let path = Path::new(arg);
            if path.is_file() {
                ScenarioSpec::load(path)
            } else {
                Err(e)
            }
        }
    }
}

pub fn simulation_report(
    spec: &ScenarioSpec,
    run: &RunOptions,
    out: &SimulationOutput,
) -> serde_json::Value {
    json!({
        "command": "simulate",
        "scenario": spec,
        "run": run,
        "truth": out.truth,
        "intercepts": { "outcome": out.intercepts[0], "non_probability": out.intercepts[1], "probability": out.intercepts[2] },
        "metrics": out.metrics,
    })
}

pub fn cmd_simulate(args: &SimulateArgs) -> Result<i32> {
    let mut spec = resolve_scenario(&args.scenario)?;
    let mut run = match &args.config {
        Some(p) => {
            let text = fs::read_to_string(p)
                .map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
            RunOptions::from_toml(&text)
                .map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
        }
        None => RunOptions::default(),
    };
    if let Some(reps) = args.reps {
        run.replications = reps;
    }
    if let Some(seed) = args.seed {
        spec = spec.with_seed(seed);
    }
    match args.scale {
        Some(Scale::Desk) => spec = spec.with_sizes(Sizes::desk()),
        Some(Scale::Full) => spec = spec.with_sizes(Sizes::full()),
        None => {}
    }
    let o = &args.overrides;
    if let Some(a) = o.alpha {
        run.options.selection.alpha = a;
    }
    if let Some(t) = o.tolerance {
        run.options.raking.constraint_tolerance = t;
    }
    if let Some(k) = o.max_order {
        run.options.max_order = k;
    }
    spec.validate()?;
    run.validate()?;
    let output = run_simulation(&spec, &run)?;
    let summary = output.summary_table();
    if let Some(dir) = &args.out {
        write_file(dir, "metrics.csv", &output.metrics_csv())?;
        write_file(dir, "replications.csv", &output.replications_csv())?;
        write_file(
            dir,
            "report.json",
            &to_json(&simulation_report(&spec, &run, &output)),
        )?;
        write_file(dir, "summary.txt", &summary)?;
    }
    print!("{summary}");
    Ok(EXIT_OK)
}

// ----------------------------------------------------------- estimate

/// Reads a weights file into `id → weight`.
pub fn read_weights(path: &Path) -> Result<Vec<(String, f64)>> {
    let table = RawTable::read(path)?;
    let id = table
        .column_index(ID_COLUMN)
        .ok_or_else(|| Error::parse(path, 1, format!("missing `{ID_COLUMN}` column")))?;
    let w = table
        .column_index("weight")
        .ok_or_else(|| Error::parse(path, 1, "missing `weight` column"))?;
    let mut seen = BTreeSet::new();
    table
        .rows
        .iter()
        .enumerate()
        .map(|(r, row)| {
            if !seen.insert(row[id].clone()) {
                return Err(Error::parse(
                    path,
                    r + 2,
                    format!("duplicate id `{}`", row[id]),
                ));
            }
            let v: f64 = row[w]
                .parse()
                .map_err(|_| Error::parse(path, r + 2, format!("`{}` is not a number", row[w])))?;
            Ok((row[id].clone(), v))
        })
        .collect()
}

/// Weights reordered to `ids`. Both sides must carry the same id set.
pub fn align_weights(ids: &[String], weights: &[(String, f64)]) -> Result<Vec<f64>> {
    let by_id: HashMap<&str, f64> = weights.iter().map(|(i, w)| (i.as_str(), *w)).collect();
    let cohort_ids: BTreeSet<&str> = ids.iter().map(String::as_str).collect();
    let missing: Vec<&str> = ids
        .iter()
        .map(String::as_str)
        .filter(|i| !by_id.contains_key(i))
        .take(5)
        .collect();
    let extra: Vec<&str> = weights
        .iter()
        .map(|(i, _)| i.as_str())
        .filter(|i| !cohort_ids.contains(i))
        .take(5)
        .collect();
    if !missing.is_empty() || !extra.is_empty() {
        return Err(Error::Domain(format!(
            "weights and cohort ids differ; first cohort ids without weight: {missing:?}; first weight ids not in cohort: {extra:?}"
        )));
    }
    Ok(ids.iter().map(|i| by_id[i.as_str()]).collect())
}

fn without_columns(table: &RawTable, drop: &[&str]) -> RawTable {
    let keep: Vec<usize> = (0..table.headers.len())
        .filter(|&j| !drop.contains(&table.headers[j].as_str()))
        .collect();
    RawTable {
        path: table.path.clone(),
        headers: keep.iter().map(|&j| table.headers[j].clone()).collect(),
        rows: table
            .rows
            .iter()
            .map(|r| keep.iter().map(|&j| r[j].clone()).collect())
            .collect(),
    }
}

fn parse_flag(table: &RawTable, j: usize, r: usize) -> Result<bool> {
    match table.rows[r][j].as_str() {
        "1" | "true" => Ok(true),
        "0" | "false" => Ok(false),
        v => Err(Error::parse(
            &table.path,
            r + 2,
            format!("`{v}` in column `{}` is not 0/1", table.headers[j]),
        )),
    }
}

/// Result of `rails estimate`.
#[derive(Debug, Clone, Serialize)]
pub struct EstimateReport {
    pub estimate: PrevalenceEstimate,
    pub double_weighted: bool,
    pub complete_rows: usize,
    pub floored: bool,
}

/// Estimates the prevalence of `args.outcome`, applying double weighting
/// first when a completeness column is given.
pub fn estimate_from_files(args: &EstimateArgs) -> Result<EstimateReport> {
    let table = RawTable::read(&args.cohort)?;
    let ids: Vec<String> = match table.column_index(ID_COLUMN) {
        Some(j) => table.rows.iter().map(|r| r[j].clone()).collect(),
        None => (0..table.rows.len()).map(|i| i.to_string()).collect(),
    };
    let weights = align_weights(&ids, &read_weights(&args.weights)?)?;
    let yj = table.column_index(&args.outcome).ok_or_else(|| {
        Error::parse(
            &table.path,
            1,
            format!("no outcome column `{}`", args.outcome),
        )
    })?;
    let complete: Vec<bool> = match &args.missing {
        Some(m) => {
            let j = table.column_index(m).ok_or_else(|| {
                Error::parse(&table.path, 1, format!("no completeness column `{m}`"))
            })?;
            (0..table.rows.len())
                .map(|r| parse_flag(&table, j, r))
                .collect::<Result<_>>()?
        }
        None => vec![true; table.rows.len()],
    };
    let outcome = |r: usize| -> Result<f64> {
        let v = &table.rows[r][yj];
        v.parse().map_err(|_| {
            Error::parse(
                &table.path,
                r + 2,
                format!("`{v}` in column `{}` is not a number", args.outcome),
            )
        })
    };
    let (w, y, floored) = if args.missing.is_some() {
        let mut drop = vec![args.outcome.as_str(), WEIGHT_COLUMN, OUTCOME_COLUMN];
        drop.extend(args.missing.as_deref());
        let covs = without_columns(&table, &drop);
        let schema = Arc::new(infer_schema(&[&covs], &HashMap::new())?);
        let cohort = cohort_from_table(&covs, schema.clone())?;
        let terms = match &args.missing_terms {
            Some(s) => TermSet::parse_list(s)?,
            None => schema.names().map(Term::main).collect(),
        };
        let x = DesignMatrix::build(&cohort, &terms, true)?;
        let n = args.population_size.unwrap_or_else(|| weights.iter().sum());
        let dw = double_weighting(&weights, &complete, x.values(), n)?;
        let y = dw
            .rows
            .iter()
            .map(|&r| outcome(r))
            .collect::<Result<Vec<_>>>()?;
        (dw.weights, y, dw.floored)
    } else {
        let y = (0..table.rows.len())
            .map(outcome)
            .collect::<Result<Vec<_>>>()?;
        (weights, y, false)
    };
    let estimate = estimate_prevalence(&w, &y, args.level)?;
    Ok(EstimateReport {
        estimate,
        double_weighted: args.missing.is_some(),
        complete_rows: complete.iter().filter(|&&c| c).count(),
        floored,
    })
}

pub fn cmd_estimate(args: &EstimateArgs) -> Result<i32> {
    let r = estimate_from_files(args)?;
    let e = &r.estimate;
    println!("estimate {}", e.estimate);
    println!("std_error {}", e.std_error);
    println!("ci_low {}", e.ci_low);
    println!("ci_high {}", e.ci_high);
    println!("level {}", e.level);
    println!("n_effective {}", e.n_effective);
    if r.double_weighted {
        println!(
            "complete_rows {}{}",
            r.complete_rows,
            if r.floored {
                " (completeness floored)"
            } else {
                ""
            }
        );
    }
    if let Some(dir) = &args.out {
        write_file(dir, "estimate.json", &to_json(&r))?;
    }
    Ok(EXIT_OK)
}
