//! Validation and execution of an [`ExperimentConfig`].

use std::ffi::OsString;
use std::fmt;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use super::config::{AlgorithmKind, AlgorithmSpec, CRule, EtaSpec, ExperimentConfig, ScheduleSpec};
use crate::algorithms::{
    run_dgt, run_naive_qdgt, run_push_pull, run_qdgt_with, AlgorithmConfig, Execution, NaiveLink,
    ThetaContext,
};
use crate::codec::{write_symbol_trace, ScalingSchedule};
use crate::constants::{
    level_schedule_fixed, level_schedule_remark, level_schedule_theorem1, max_step_size, AnalysisOptions,
    ConstantsBundle, NetworkConstants, ProblemScalars, ScheduleParams,
};
use crate::digraph::{build_weights, doubly_stochastic, perron_vectors, strongly_connected, Digraph, WeightPair};
use crate::error::{Error, Result};
use crate::metrics::{self, ConvergenceReport};
use crate::problems::{Objective, QuadraticObjective};

/// Environment variable that overrides the configured output directory.
pub const OUTPUT_DIR_ENV: &str = "QDGT_OUTPUT_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum Severity {
    Info,
    Warning,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Diagnostic {
    pub severity: Severity,
    /// Algorithm label, or `None` for experiment-level findings.
    pub scope: Option<String>,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sev = match self.severity {
            Severity::Info => "info",
            Severity::Warning => "warning",
            Severity::Error => "error",
        };
        match &self.scope {
            Some(s) => write!(f, "{sev}: [{s}] {}", self.message),
            None => write!(f, "{sev}: {}", self.message),
        }
    }
}

pub fn is_runnable(diags: &[Diagnostic]) -> bool {
    diags.iter().all(|d| d.severity != Severity::Error)
}

/// Fixtures shared by every run of one experiment.
struct Fixtures {
    graph: Digraph,
    objective: QuadraticObjective,
    x1: DMatrix<f64>,
}

impl Fixtures {
    fn problem(&self) -> ProblemScalars {
        ProblemScalars {
            mu: self.objective.mu(),
            l: self.objective.l(),
            n: self.objective.nodes(),
            m: self.objective.dim(),
        }
    }
}

/// One concrete run after expanding level sweeps.
#[derive(Debug, Clone)]
struct RunPlan {
    label: String,
    spec: AlgorithmSpec,
    levels: Option<u64>,
    c: Option<f64>,
}

fn expand(cfg: &ExperimentConfig) -> Vec<RunPlan> {
    let mut out = Vec::new();
    for spec in &cfg.algorithms {
        let base = spec.label.clone().unwrap_or_else(|| spec.kind.as_str().to_string());
        let swept = match spec.kind {
            AlgorithmKind::Qdgt => spec.schedule == ScheduleSpec::Fixed,
            AlgorithmKind::NaiveQdgt => !spec.levels.is_empty(),
            _ => false,
        };
        if swept && !spec.levels.is_empty() {
            for &k in &spec.levels {
                let c = spec.c.map(|c| match spec.c_rule {
                    CRule::Same => c,
                    CRule::EqualRange => c * 3.0 / (2 * k + 1) as f64,
                });
                out.push(RunPlan {
                    label: format!("{base}_K{k}"),
                    spec: spec.clone(),
                    levels: Some(k),
                    c,
                });
            }
        } else {
            out.push(RunPlan {
                label: base,
                spec: spec.clone(),
                levels: None,
                c: spec.c,
            });
        }
    }
    out
}

/// Everything a Q-DGT run derives from the constants machinery.
struct QdgtSetup {
    weights: WeightPair,
    pv: crate::digraph::PerronVectors,
    bundle: ConstantsBundle,
    /// False when the configured `eta` exceeds `eta_max` and the bundle was
    /// evaluated at `eta_max` for reporting only.
    eta_certified: bool,
    eta: f64,
    xi: f64,
    c: f64,
}

fn resolve_eta(spec: &AlgorithmSpec, eta_max: f64) -> f64 {
    match spec.eta {
        EtaSpec::Value(v) => v,
        EtaSpec::Keyword(_) => eta_max,
    }
}

fn qdgt_setup(plan: &RunPlan, fx: &Fixtures, opts: &AnalysisOptions) -> Result<QdgtSetup> {
    let spec = &plan.spec;
    let weights = build_weights(&fx.graph, spec.alpha, spec.beta)?;
    let pv = perron_vectors(&weights)?;
    let net = NetworkConstants::compute(&weights, &pv, opts)?;
    let problem = fx.problem();
    let eta_max = max_step_size(&problem, &net).eta_max;
    let eta = resolve_eta(spec, eta_max);
    let eta_certified = eta <= eta_max * (1.0 + 1e-12);
    let bundle = ConstantsBundle::from_network(net, problem, Some(eta.min(eta_max)), opts)?;
    let rho_hat = bundle.rho_hat();
    let xi = spec.xi.unwrap_or(0.5 * (1.0 + rho_hat));
    let c = plan.c.unwrap_or(1.0);
    Ok(QdgtSetup {
        weights,
        pv,
        bundle,
        eta_certified,
        eta,
        xi,
        c,
    })
}

fn schedule_params<'a>(s: &'a QdgtSetup, fx: &Fixtures, horizon: usize) -> Result<ScheduleParams<'a>> {
    let zero = DMatrix::zeros(fx.x1.nrows(), fx.x1.ncols());
    let th = metrics::theta(
        &fx.x1,
        &zero,
        &zero,
        &s.pv,
        &s.bundle.network.norm_a,
        &s.bundle.network.norm_b,
        fx.objective.x_star(),
    )?;
    Ok(ScheduleParams {
        consts: &s.bundle,
        c: s.c,
        xi: s.xi,
        c_theta: th.norm(),
        x1_inf: fx.x1.amax(),
        y1_inf: fx.objective.stacked_gradient(&fx.x1).amax(),
        horizon,
    })
}

fn build_fixtures(cfg: &ExperimentConfig, base: &Path) -> Result<Fixtures> {
    let graph = cfg.graph.build(base)?;
    let objective = cfg.problem.build(graph.n(), base)?;
    let x1 = cfg.init.build(graph.n(), objective.dim());
    Ok(Fixtures { graph, objective, x1 })
}

/// Checks everything that can be checked without running. An empty list
/// (or one with no errors) means the config is runnable.
pub fn validate_config(cfg: &ExperimentConfig, base: &Path) -> Vec<Diagnostic> {
    let mut d = Vec::new();
    let mut push = |severity, scope: Option<&str>, message: String| {
        d.push(Diagnostic {
            severity,
            scope: scope.map(str::to_string),
            message,
        })
    };
    if cfg.horizon == 0 {
        push(Severity::Error, None, "horizon must be at least 1".into());
    }
    if let Some(t) = cfg.tolerance {
        if !(t > 0.0) {
            push(Severity::Error, None, format!("tolerance must be positive, got {t}"));
        }
    }
    if cfg.algorithms.is_empty() {
        push(Severity::Error, None, "no [[algorithm]] entries".into());
    }
    let graph = match cfg.graph.build(base) {
        Ok(g) => g,
        Err(e) => {
            push(Severity::Error, None, format!("graph: {e}"));
            return d;
        }
    };
    if !strongly_connected(&graph) {
        push(
            Severity::Error,
            None,
            format!("graph is not strongly connected ({} components); every node must reach every other", crate::digraph::scc_count(&graph)),
        );
        return d;
    }
    let fx = match build_fixtures(cfg, base) {
        Ok(f) => f,
        Err(e) => {
            push(Severity::Error, None, format!("problem: {e}"));
            return d;
        }
    };

    let mut labels = std::collections::BTreeSet::new();
    for plan in expand(cfg) {
        let scope = Some(plan.label.as_str());
        if !labels.insert(plan.label.clone()) {
            push(Severity::Error, scope, "duplicate run label".into());
        }
        let spec = &plan.spec;
        for (name, v) in [("alpha", spec.alpha), ("beta", spec.beta)] {
            if !(v > 0.0 && v < 1.0) {
                push(Severity::Error, scope, format!("{name} = {v} must lie in (0, 1)"));
            }
        }
        if let EtaSpec::Value(v) = spec.eta {
            if !(v > 0.0 && v.is_finite()) {
                push(Severity::Error, scope, format!("eta = {v} must be positive"));
            }
        }
        if let Some(c) = plan.c {
            if !(c > 0.0 && c.is_finite()) {
                push(Severity::Error, scope, format!("C = {c} must be positive"));
            }
        }
        if plan.levels == Some(0) {
            push(Severity::Error, scope, "quantization levels must be at least 1".into());
        }
        match spec.kind {
            AlgorithmKind::Dgt | AlgorithmKind::NaiveQdgt => {
                if let Err(e) = doubly_stochastic(&fx.graph) {
                    push(Severity::Error, scope, format!("needs doubly stochastic weights: {e}"));
                }
                if spec.eta == EtaSpec::default() {
                    push(Severity::Error, scope, "eta = \"auto\" is only defined for qdgt".into());
                }
                if spec.kind == AlgorithmKind::NaiveQdgt && plan.levels.is_some() && plan.c.is_none() {
                    push(Severity::Error, scope, "quantized naive runs need a constant scale c".into());
                }
            }
            AlgorithmKind::PushPull => {
                if spec.eta == EtaSpec::default() {
                    push(Severity::Error, scope, "eta = \"auto\" is only defined for qdgt".into());
                }
            }
            AlgorithmKind::Qdgt => validate_qdgt(&plan, &fx, cfg, &mut push),
        }
    }
    d
}

fn validate_qdgt(
    plan: &RunPlan,
    fx: &Fixtures,
    cfg: &ExperimentConfig,
    push: &mut impl FnMut(Severity, Option<&str>, String),
) {
    let scope = Some(plan.label.as_str());
    let spec = &plan.spec;
    if !(spec.alpha > 0.0 && spec.alpha < 1.0 && spec.beta > 0.0 && spec.beta < 1.0) {
        return;
    }
    if spec.schedule == ScheduleSpec::Fixed && spec.levels.is_empty() {
        push(Severity::Error, scope, "fixed schedule needs a nonempty levels list".into());
    }
    let s = match qdgt_setup(plan, fx, &cfg.analysis) {
        Ok(s) => s,
        Err(e) => {
            push(Severity::Error, scope, format!("constants: {e}"));
            return;
        }
    };
    let eta_max = s.bundle.step.eta_max;
    if spec.eta == EtaSpec::default() {
        push(
            Severity::Info,
            scope,
            format!("eta = auto resolved to {:e} (eta_max = {eta_max:e}, binding term {:?})", s.eta, s.bundle.step.binding),
        );
    }
    let certified = spec.schedule != ScheduleSpec::Fixed;
    if !s.eta_certified {
        let sev = if certified { Severity::Error } else { Severity::Warning };
        push(sev, scope, format!("eta = {:e} exceeds eta_max = {eta_max:e}; no convergence certificate", s.eta));
    }
    let rho_hat = s.bundle.rho_hat();
    if !(s.xi < 1.0 && s.xi > 0.0) {
        push(Severity::Error, scope, format!("xi = {} must lie in (0, 1)", s.xi));
    } else if s.xi <= rho_hat {
        let sev = if certified { Severity::Error } else { Severity::Warning };
        push(sev, scope, format!("xi = {} must lie in (rho_hat, 1) = ({rho_hat}, 1) for the level rule", s.xi));
    }
    if certified {
        match schedule_params(&s, fx, cfg.horizon) {
            Ok(p) if p.c_theta > 0.0 => {}
            Ok(_) => push(Severity::Error, scope, "C_Theta = ||Theta(1)|| is zero; start away from the optimum".into()),
            Err(e) => push(Severity::Error, scope, format!("schedule: {e}")),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub label: String,
    pub algorithm: String,
    pub rounds: usize,
    pub final_residual: f64,
    pub rounds_to_tolerance: Option<usize>,
    pub rate: Option<f64>,
    pub r_squared: Option<f64>,
    pub bits_total: u64,
    pub saturation_events: usize,
    pub eta: f64,
    pub levels: Option<u64>,
    pub c: Option<f64>,
    pub xi: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub output_dir: PathBuf,
    pub summaries: Vec<RunSummary>,
    pub reports: Vec<ConvergenceReport>,
}

impl ExperimentOutcome {
    pub fn report(&self, label: &str) -> Option<&ConvergenceReport> {
        self.summaries.iter().position(|s| s.label == label).map(|i| &self.reports[i])
    }
}

/// `env` (normally `QDGT_OUTPUT_DIR`) wins, then the config, then
/// `out/<name>` beside the config.
pub fn resolve_output_dir(cfg: &ExperimentConfig, base: &Path, env: Option<OsString>) -> PathBuf {
    if let Some(e) = env.filter(|e| !e.is_empty()) {
        return PathBuf::from(e);
    }
    match &cfg.output_dir {
        Some(p) if p.is_absolute() => p.clone(),
        Some(p) => base.join(p),
        None => base.join("out").join(&cfg.name),
    }
}

struct RunResult {
    summary: RunSummary,
    report: ConvergenceReport,
    constants: Option<ConstantsBundle>,
    symbols: Vec<crate::codec::SymbolRecord>,
}

fn execute(plan: &RunPlan, fx: &Fixtures, cfg: &ExperimentConfig) -> Result<RunResult> {
    let spec = &plan.spec;
    let setup_fail = |e: Error| Error::Config(format!("[{}] {e}", plan.label));
    let fail = |e: Error| Error::Run {
        label: plan.label.clone(),
        source: Box::new(e),
    };
    let mut constants = None;
    let mut symbols = Vec::new();
    let (report, eta, xi, c) = match spec.kind {
        AlgorithmKind::Qdgt => {
            let s = qdgt_setup(plan, fx, &cfg.analysis).map_err(setup_fail)?;
            let schedule = match spec.schedule {
                ScheduleSpec::Fixed => {
                    level_schedule_fixed(plan.levels.unwrap_or(1), cfg.horizon).map_err(setup_fail)?
                }
                ScheduleSpec::Theorem1 => {
                    level_schedule_theorem1(&schedule_params(&s, fx, cfg.horizon)?).map_err(setup_fail)?
                }
                ScheduleSpec::Remark => {
                    level_schedule_remark(&schedule_params(&s, fx, cfg.horizon)?).map_err(setup_fail)?
                }
            };
            let mut ac = AlgorithmConfig::new(s.eta, schedule, ScalingSchedule::new(s.c, s.xi).map_err(setup_fail)?, cfg.horizon);
            ac.tolerance = cfg.tolerance;
            ac.saturation = spec.saturation;
            ac.execution = cfg.execution;
            ac.record_symbols = spec.record_symbols;
            let ctx = ThetaContext {
                pv: &s.pv,
                norm_a: &s.bundle.network.norm_a,
                norm_b: &s.bundle.network.norm_b,
            };
            let report = run_qdgt_with(&ac, &s.weights, &fx.graph, &fx.objective, fx.x1.clone(), Some(&ctx), |_, tr| {
                symbols.extend_from_slice(&tr.symbols)
            })
            .map_err(fail)?;
            let (eta, xi, c) = (s.eta, s.xi, s.c);
            constants = Some(s.bundle);
            (report, eta, Some(xi), Some(c))
        }
        AlgorithmKind::PushPull => {
            let w = build_weights(&fx.graph, spec.alpha, spec.beta)?;
            let eta = resolve_eta(spec, f64::NAN);
            let r = run_push_pull(&w, eta, &fx.objective, fx.x1.clone(), cfg.horizon, cfg.tolerance).map_err(fail)?;
            (r, eta, None, None)
        }
        AlgorithmKind::Dgt => {
            let w = doubly_stochastic(&fx.graph)?;
            let eta = resolve_eta(spec, f64::NAN);
            let r = run_dgt(&w, eta, &fx.objective, fx.x1.clone(), cfg.horizon, cfg.tolerance).map_err(fail)?;
            (r, eta, None, None)
        }
        AlgorithmKind::NaiveQdgt => {
            let w = doubly_stochastic(&fx.graph)?;
            let eta = resolve_eta(spec, f64::NAN);
            let link = match (plan.levels, plan.c) {
                (Some(levels), Some(c)) => NaiveLink::Quantized {
                    levels,
                    scaling: ScalingSchedule::constant(c)?,
                },
                _ => NaiveLink::Exact,
            };
            let r = run_naive_qdgt(&fx.graph, &w, eta, &fx.objective, fx.x1.clone(), link, cfg.horizon, cfg.tolerance)
                .map_err(fail)?;
            (r, eta, None, plan.c)
        }
    };
    let summary = RunSummary {
        label: plan.label.clone(),
        algorithm: report.algorithm.clone(),
        rounds: report.rounds.len(),
        final_residual: report.final_residual(),
        rounds_to_tolerance: cfg.tolerance.and_then(|t| report.rounds_to(t)),
        rate: report.fit.map(|f| f.rate),
        r_squared: report.fit.map(|f| f.r_squared),
        bits_total: report.bits_total,
        saturation_events: report.saturation_events,
        eta,
        levels: plan.levels,
        c,
        xi,
    };
    Ok(RunResult {
        summary,
        report,
        constants,
        symbols,
    })
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn check_runnable(cfg: &ExperimentConfig, base: &Path) -> Result<()> {
    let diags = validate_config(cfg, base);
    if is_runnable(&diags) {
        return Ok(());
    }
    let msgs: Vec<String> = diags
        .iter()
        .filter(|d| d.severity == Severity::Error)
        .map(ToString::to_string)
        .collect();
    Err(Error::Config(msgs.join("\n")))
}

/// Runs every algorithm and writes `<label>.csv` traces, a
/// `<label>_constants.csv` audit per Q-DGT run, optional
/// `<label>_symbols.csv` traces, and `summary.csv` into `out_dir`.
pub fn run_experiment(cfg: &ExperimentConfig, base: &Path, out_dir: &Path) -> Result<ExperimentOutcome> {
    check_runnable(cfg, base)?;
    let fx = build_fixtures(cfg, base)?;
    let plans = expand(cfg);
    let results: Vec<Result<RunResult>> = match cfg.execution {
        Execution::Sequential => plans.iter().map(|p| execute(p, &fx, cfg)).collect(),
        Execution::Parallel => plans.par_iter().map(|p| execute(p, &fx, cfg)).collect(),
    };
    std::fs::create_dir_all(out_dir)?;
    let mut summaries = Vec::with_capacity(results.len());
    let mut reports = Vec::with_capacity(results.len());
    for r in results {
        let r = r?;
        let label = &r.summary.label;
        r.report.write_csv(create(out_dir, &format!("{label}.csv"))?)?;
        if let Some(b) = &r.constants {
            b.write_report(create(out_dir, &format!("{label}_constants.csv"))?)?;
        }
        if !r.symbols.is_empty() {
            write_symbol_trace(create(out_dir, &format!("{label}_symbols.csv"))?, &r.symbols)?;
        }
        summaries.push(r.summary);
        reports.push(r.report);
    }
    let mut w = csv::Writer::from_writer(create(out_dir, "summary.csv")?);
    for s in &summaries {
        w.serialize(s)?;
    }
    w.flush()?;
    Ok(ExperimentOutcome {
        output_dir: out_dir.to_path_buf(),
        summaries,
        reports,
    })
}

/// Writes only the constants audits, returning `(label, path)` pairs.
pub fn write_constants(cfg: &ExperimentConfig, base: &Path, out_dir: &Path) -> Result<Vec<(String, PathBuf)>> {
    let fx = build_fixtures(cfg, base)?;
    std::fs::create_dir_all(out_dir)?;
    let mut out = Vec::new();
    for plan in expand(cfg).into_iter().filter(|p| p.spec.kind == AlgorithmKind::Qdgt) {
        let s = qdgt_setup(&plan, &fx, &cfg.analysis).map_err(|e| Error::Config(format!("[{}] {e}", plan.label)))?;
        let path = out_dir.join(format!("{}_constants.csv", plan.label));
        s.bundle.write_report(BufWriter::new(File::create(&path)?))?;
        out.push((plan.label, path));
    }
    Ok(out)
}
