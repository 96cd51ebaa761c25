//! Full run of a scenario: validate, spectral analysis, feasibility, both simulators,
//! invariant checks and the optimality oracle. Produces a [`RunReport`] plus output files.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;
use serde_json::Value;

use crate::dde::{check_feasibility, csv_err, Verdict};
use crate::error::{Error, Result};
use crate::hjb::{feedback, g_value, hjb_relative_residual, value_function, StateSample};
use crate::model::{validate, DerivedConstants};
use crate::oracle::{perturbation_scan, projected_ascent, DiscreteProblem};
use crate::scenario::{Scenario, SweepParam};
use crate::simulate::{
    cross_method_gap, invariant_monitor, simulate_integral_form, simulate_lambda_form, CrossGap,
    InvariantReport, Trajectory,
};
use crate::spectral::{analyze, SpectralReport};
use crate::dde::FeasibilityReport;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK: i32 = 1;
pub const EXIT_REJECTED: i32 = 2;
pub const EXIT_INPUT: i32 = 3;

/// Exit code for an error that stops the pipeline.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Regime { .. } | Error::Infeasible { .. } | Error::Domain(_) => EXIT_REJECTED,
        Error::Parse(_) | Error::Io(_) => EXIT_INPUT,
        _ => EXIT_CHECK,
    }
}

/// A report section: computed, skipped with a reason, or failed with an error.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum Section<T> {
    Done(T),
    Skipped { reason: String },
    Failed { reason: String, detail: String },
}

impl<T> Section<T> {
    fn failed(err: &Error) -> Self {
        Section::Failed {
            reason: err.reason_code(),
            detail: err.to_string(),
        }
    }

    fn skipped(reason: impl Into<String>) -> Self {
        Section::Skipped {
            reason: reason.into(),
        }
    }

    pub fn done(&self) -> Option<&T> {
        match self {
            Section::Done(t) => Some(t),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl Check {
    fn below(name: &str, value: f64, tolerance: f64) -> Self {
        Check {
            name: name.into(),
            value,
            tolerance,
            pass: value < tolerance,
        }
    }

    fn at_most(name: &str, value: f64, tolerance: f64) -> Self {
        Check {
            name: name.into(),
            value,
            tolerance,
            pass: value <= tolerance,
        }
    }

    fn at_least(name: &str, value: f64, bound: f64) -> Self {
        Check {
            name: name.into(),
            value,
            tolerance: bound,
            pass: value >= bound,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeasibilitySummary {
    pub verdict: Verdict,
    pub k0: f64,
    pub discounted_cost: f64,
    pub tail_bound: f64,
    pub threshold: f64,
    pub slack: f64,
    pub horizon: f64,
}

/// Value function, feedback and HJB residual at the initial state.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StateSummary {
    #[serde(rename = "G")]
    pub g: f64,
    pub v: f64,
    pub c_feedback: f64,
    pub hjb_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationSummary {
    #[serde(rename = "Lambda")]
    pub lambda: f64,
    #[serde(rename = "Gamma")]
    pub growth: f64,
    pub n: usize,
    pub horizon: f64,
    pub degenerate: bool,
    pub invariants: InvariantReport,
    pub cross_gap: CrossGap,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AscentSummary {
    pub j_start: f64,
    pub j_final: f64,
    pub gap: f64,
    pub iterations: usize,
    pub stationarity: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleSummary {
    pub m: usize,
    pub horizon: f64,
    pub j_closed_loop: f64,
    pub v: f64,
    pub value_gap: f64,
    pub trials: usize,
    pub seed: u64,
    pub max_gain: f64,
    pub improvements: usize,
    pub gain_tolerance: f64,
    pub ascent: Section<AscentSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub scenario: Scenario,
    pub derived: Section<DerivedConstants>,
    pub spectral: Section<SpectralReport>,
    pub feasibility: Section<FeasibilitySummary>,
    pub state: Section<StateSummary>,
    pub simulation: Section<SimulationSummary>,
    pub oracle: Section<OracleSummary>,
    pub checks: Vec<Check>,
    pub exit_code: i32,
    /// `ok`, `CheckFailed(name,...)` or the reason code of the stopping error.
    pub reason: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

impl RunReport {
    pub fn passed(&self) -> bool {
        self.exit_code == EXIT_OK
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Indented `key: value` rendering of the same data as the JSON report.
    pub fn to_text(&self) -> String {
        let value = serde_json::to_value(self).expect("report serializes");
        let mut out = String::new();
        render(&value, 0, &mut out);
        out
    }

    /// Single-line summary for the terminal.
    pub fn status_line(&self) -> String {
        match &self.detail {
            Some(d) => format!("exit={} reason={} {d}", self.exit_code, self.reason),
            None => format!("exit={} reason={}", self.exit_code, self.reason),
        }
    }
}

fn render(v: &Value, indent: usize, out: &mut String) {
    let pad = "  ".repeat(indent);
    match v {
        Value::Object(map) => {
            for (k, v) in map {
                match v {
                    Value::Object(_) => {
                        out.push_str(&format!("{pad}{k}:\n"));
                        render(v, indent + 1, out);
                    }
                    Value::Array(items) if items.iter().any(Value::is_object) => {
                        out.push_str(&format!("{pad}{k}:\n"));
                        for item in items {
                            out.push_str(&format!("{pad}  - {}\n", inline(item)));
                        }
                    }
                    _ => out.push_str(&format!("{pad}{k}: {}\n", inline(v))),
                }
            }
        }
        other => out.push_str(&format!("{pad}{}\n", inline(other))),
    }
}

fn inline(v: &Value) -> String {
    match v {
        Value::Null => "null".into(),
        Value::String(s) => s.clone(),
        Value::Object(map) => map
            .iter()
            .map(|(k, v)| format!("{k}={}", inline(v)))
            .collect::<Vec<_>>()
            .join(" "),
        Value::Array(items) => format!(
            "[{}]",
            items.iter().map(inline).collect::<Vec<_>>().join(", ")
        ),
        other => other.to_string(),
    }
}

/// Everything a run produced.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub report: RunReport,
    pub trajectory: Option<Trajectory>,
    pub lambda_form: Option<Trajectory>,
    pub feasibility: Option<FeasibilityReport>,
}

struct Builder {
    report: RunReport,
    stop: Option<Error>,
}

impl Builder {
    fn stop(&mut self, err: Error) {
        self.stop = Some(err);
    }
}

const AFTER_STOP: &str = "earlier stage stopped the run";

pub fn run_scenario(scenario: &Scenario) -> RunOutcome {
    let mut b = Builder {
        report: RunReport {
            scenario: scenario.clone(),
            derived: Section::skipped(AFTER_STOP),
            spectral: Section::skipped(AFTER_STOP),
            feasibility: Section::skipped(AFTER_STOP),
            state: Section::skipped(AFTER_STOP),
            simulation: Section::skipped(AFTER_STOP),
            oracle: Section::skipped(AFTER_STOP),
            checks: Vec::new(),
            exit_code: EXIT_OK,
            reason: "ok".into(),
            detail: None,
        },
        stop: None,
    };
    let mut outcome = RunOutcome {
        report: b.report.clone(),
        trajectory: None,
        lambda_form: None,
        feasibility: None,
    };
    stages(scenario, &mut b, &mut outcome);

    let mut report = b.report;
    if let Some(err) = b.stop {
        report.exit_code = exit_code(&err);
        report.reason = err.reason_code();
        report.detail = Some(err.to_string());
    } else {
        let failed: Vec<&str> = report
            .checks
            .iter()
            .filter(|c| !c.pass)
            .map(|c| c.name.as_str())
            .collect();
        let broken = section_failures(&report);
        if !failed.is_empty() || !broken.is_empty() {
            let names: Vec<&str> = failed.into_iter().chain(broken).collect();
            report.exit_code = EXIT_CHECK;
            report.reason = format!("CheckFailed({})", names.join(","));
        }
    }
    outcome.report = report;
    outcome
}

fn section_failures(r: &RunReport) -> Vec<&'static str> {
    let mut out = Vec::new();
    if matches!(r.state, Section::Failed { .. }) {
        out.push("state");
    }
    if matches!(r.oracle, Section::Failed { .. }) {
        out.push("oracle");
    }
    if let Some(Section::Failed { .. }) = r.oracle.done().map(|o| &o.ascent) {
        out.push("ascent");
    }
    out
}

fn stages(sc: &Scenario, b: &mut Builder, out: &mut RunOutcome) {
    let p = &sc.params;
    let nm = &sc.numerics;
    let tol = &nm.tolerances;

    let derived = match validate(p) {
        Ok(d) => d,
        Err(e) => {
            b.report.derived = Section::failed(&e);
            return b.stop(e);
        }
    };
    let init = match sc.check_grids().and_then(|_| sc.initial_state(nm.n)) {
        Ok(i) => i,
        Err(e) => {
            b.report.derived = Section::Done(derived);
            return b.stop(e);
        }
    };

    match analyze(p, &init.history, nm.margin) {
        Ok(s) => {
            b.report.derived = Section::Done(derived.with_lambda0(s.lambda0));
            b.report.checks.push(Check::below("root_residual", s.residual, tol.root));
            b.report.checks.push(Check {
                name: "dominance_certified".into(),
                value: s.dominance_margin,
                tolerance: 0.0,
                pass: s.dominance_margin > 0.0,
            });
            b.report.spectral = Section::Done(s);
        }
        Err(e) => {
            b.report.derived = Section::Done(derived);
            b.report.spectral = Section::failed(&e);
            return b.stop(e);
        }
    }

    let fh = sc.feasibility_horizon();
    match check_feasibility(p, &init, fh) {
        Ok(f) => {
            b.report.feasibility = Section::Done(FeasibilitySummary {
                verdict: f.verdict,
                k0: f.k0,
                discounted_cost: f.discounted_cost,
                tail_bound: f.tail_bound,
                threshold: f.threshold(),
                slack: f.slack,
                horizon: fh,
            });
            let infeasible = !f.is_feasible();
            let threshold = f.threshold();
            out.feasibility = Some(f);
            if infeasible {
                return b.stop(Error::Infeasible {
                    k0: init.k0,
                    threshold,
                });
            }
        }
        Err(e) => {
            b.report.feasibility = Section::failed(&e);
            return b.stop(e);
        }
    }

    let horizon = sc.horizon();
    let (a, l) = rayon::join(
        || simulate_integral_form(p, &init, horizon, nm.n),
        || simulate_lambda_form(p, &init, horizon, nm.n),
    );
    let (traj, lam) = match (a, l) {
        (Ok(a), Ok(l)) => (a, l),
        (Err(e), _) | (_, Err(e)) => {
            b.report.simulation = Section::failed(&e);
            return b.stop(e);
        }
    };
    let degenerate = traj.meta.degenerate;

    b.report.state = if degenerate {
        Section::skipped("Lambda = 0, the initial state lies on the boundary G = 0")
    } else {
        match state_summary(sc, &init) {
            Ok(s) => {
                b.report.checks.push(Check::below("hjb_residual", s.hjb_residual, tol.hjb));
                Section::Done(s)
            }
            Err(e) => Section::failed(&e),
        }
    };

    match (invariant_monitor(&traj, p, &init), cross_method_gap(&traj, &lam)) {
        (Ok(inv), Ok(gap)) => {
            let c_max = traj.rows.iter().map(|r| r.c).fold(0.0, f64::max);
            let checks = &mut b.report.checks;
            checks.push(Check::below("g_drift", inv.g_drift, tol.g_drift));
            checks.push(Check::below("lambda_law", inv.lambda_law, tol.lambda_law));
            checks.push(Check::below("cross_method", gap.max(), tol.cross_method));
            checks.push(Check::below("external_residual", inv.external, tol.external));
            checks.push(Check::below("budget", inv.budget, tol.budget));
            let slack = if degenerate { -1e-6 * c_max } else { 0.0 };
            checks.push(Check::at_least("min_c_minus_h", inv.min_c_minus_h, slack));
            checks.push(Check::at_least("min_k", inv.min_k, 0.0));
            checks.push(Check::at_most("cm_excess", inv.cm_excess, 1e-6 * c_max));
            b.report.simulation = Section::Done(SimulationSummary {
                lambda: traj.meta.lambda,
                growth: traj.meta.growth,
                n: nm.n,
                horizon,
                degenerate,
                invariants: inv,
                cross_gap: gap,
            });
        }
        (Err(e), _) | (_, Err(e)) => {
            b.report.simulation = Section::failed(&e);
            return b.stop(e);
        }
    }
    out.trajectory = Some(traj);
    out.lambda_form = Some(lam);

    b.report.oracle = if !nm.oracle {
        Section::skipped("disabled")
    } else if degenerate {
        Section::skipped("Lambda = 0, closed-loop utility is not finite")
    } else {
        match oracle_summary(sc) {
            Ok(o) => {
                let checks = &mut b.report.checks;
                checks.push(Check::at_most("oracle_value_gap", o.value_gap, tol.value_gap));
                checks.push(Check::at_most("oracle_perturbation", o.max_gain, o.gain_tolerance));
                if let Some(a) = o.ascent.done() {
                    checks.push(Check::at_most("oracle_ascent", a.gap, tol.ascent_gap));
                }
                Section::Done(o)
            }
            Err(e) => Section::failed(&e),
        }
    };
}

fn state_summary(sc: &Scenario, init: &crate::model::InitialState) -> Result<StateSummary> {
    let state = StateSample::new(init.k0, init.history.clone())?;
    let p = &sc.params;
    Ok(StateSummary {
        g: g_value(&state, p)?,
        v: value_function(&state, p)?,
        c_feedback: feedback(&state, p)?,
        hjb_residual: hjb_relative_residual(&state, p)?,
    })
}

fn oracle_summary(sc: &Scenario) -> Result<OracleSummary> {
    let p = &sc.params;
    let nm = &sc.numerics;
    let horizon = sc.oracle_horizon();
    let m = sc.oracle_m()?;
    let init = sc.initial_state(nm.oracle_n)?;
    let traj = simulate_integral_form(p, &init, horizon, nm.oracle_n)?;
    let problem = DiscreteProblem::new(p, &init, horizon, m)?;
    let controls: Vec<f64> = traj.rows.iter().map(|r| r.c).collect();
    let j_cl = problem.evaluate_objective(&controls)?;
    let fine = sc.initial_state(nm.n.max(nm.oracle_n))?;
    let v = value_function(&StateSample::new(fine.k0, fine.history)?, p)?;
    let scan = perturbation_scan(&problem, &controls, nm.trials, nm.seed)?;
    let ascent = if nm.ascent_iters == 0 {
        Section::skipped("ascent_iters = 0")
    } else {
        match problem
            .minimal_start()
            .and_then(|s| projected_ascent(&problem, &s, nm.ascent_iters))
        {
            Ok(a) => Section::Done(AscentSummary {
                j_start: a.j_start,
                j_final: a.j_final,
                gap: ((a.j_final - j_cl) / j_cl).abs(),
                iterations: a.iterations,
                stationarity: a.stationarity,
                converged: a.converged,
            }),
            Err(e) => Section::failed(&e),
        }
    };
    Ok(OracleSummary {
        m,
        horizon,
        j_closed_loop: j_cl,
        v,
        value_gap: ((j_cl - v) / v).abs(),
        trials: nm.trials,
        seed: nm.seed,
        max_gain: scan.max_gain,
        improvements: scan.improvements,
        gain_tolerance: scan.tolerance,
        ascent,
    })
}

/// Which files [`write_outputs`] produces.
#[derive(Debug, Clone, Copy, Default)]
pub struct OutputFlags {
    pub check_only: bool,
    pub plot_data: bool,
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    let path = dir.join(name);
    File::create(&path)
        .map(BufWriter::new)
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

/// Writes `report.txt`, `report.json` and, unless check-only, `trajectory.csv` and
/// `feasibility.csv`. Plot data goes to `plot_paths.csv`, `plot_g_drift.csv` and
/// `plot_residuals.csv`.
pub fn write_outputs(outcome: &RunOutcome, dir: &Path, flags: OutputFlags) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
    let mut f = create(dir, "report.txt")?;
    f.write_all(outcome.report.to_text().as_bytes())?;
    f.flush()?;
    let mut f = create(dir, "report.json")?;
    f.write_all(outcome.report.to_json().as_bytes())?;
    f.write_all(b"\n")?;
    f.flush()?;
    if !flags.check_only {
        if let Some(t) = &outcome.trajectory {
            t.write_csv(create(dir, "trajectory.csv")?)?;
        }
        if let Some(fr) = &outcome.feasibility {
            fr.write_csv(create(dir, "feasibility.csv")?)?;
        }
    }
    if flags.plot_data {
        if let (Some(t), Some(l)) = (&outcome.trajectory, &outcome.lambda_form) {
            write_plot_data(t, l, dir)?;
        }
    }
    Ok(())
}

fn write_rows(dir: &Path, name: &str, header: &[&str], rows: impl Iterator<Item = Vec<f64>>) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(dir, name)?);
    w.write_record(header).map_err(csv_err)?;
    for row in rows {
        w.write_record(row.iter().map(|v| format!("{v:.16e}")))
            .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn write_plot_data(t: &Trajectory, l: &Trajectory, dir: &Path) -> Result<()> {
    write_rows(
        dir,
        "plot_paths.csv",
        &["t", "k", "c", "h"],
        t.rows.iter().map(|r| vec![r.t, r.k, r.c, r.h]),
    )?;
    let g0 = t.rows[0].g;
    let growth = t.meta.growth;
    write_rows(
        dir,
        "plot_g_drift.csv",
        &["t", "G", "G_trend", "drift"],
        t.rows.iter().map(|r| {
            let trend = g0 * (growth * r.t).exp();
            vec![r.t, r.g, trend, (r.g - trend).abs() / trend.abs()]
        }),
    )?;
    let c_scale = t.rows.iter().map(|r| r.c.abs()).fold(0.0, f64::max);
    write_rows(
        dir,
        "plot_residuals.csv",
        &["t", "lambda_check", "external_residual", "cross_method_c"],
        t.rows.iter().zip(&l.rows).map(|(a, b)| {
            vec![a.t, a.lambda_check, a.external_residual, (a.c - b.c).abs() / c_scale]
        }),
    )
}

/// One row of a sweep summary.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub value: f64,
    pub lambda0: Option<f64>,
    #[serde(rename = "Lambda")]
    pub lambda: Option<f64>,
    #[serde(rename = "Gamma")]
    pub growth: Option<f64>,
    pub max_drift: Option<f64>,
    pub verdict: Option<Verdict>,
    pub exit_code: i32,
    pub reason: String,
}

impl SweepRow {
    fn from_report(value: f64, r: &RunReport) -> Self {
        let sim = r.simulation.done();
        SweepRow {
            value,
            lambda0: r.spectral.done().map(|s| s.lambda0),
            lambda: sim.map(|s| s.lambda),
            growth: r.derived.done().map(|d| d.growth),
            max_drift: sim.map(|s| s.invariants.g_drift),
            verdict: r.feasibility.done().map(|f| f.verdict),
            exit_code: r.exit_code,
            reason: r.reason.clone(),
        }
    }
}

/// Runs the pipeline once per value, concurrently. Rows come back in input order.
pub fn run_sweep(base: &Scenario, param: SweepParam, values: &[f64]) -> Vec<SweepRow> {
    values
        .par_iter()
        .map(|&v| {
            let sc = base.with_value(param, v);
            SweepRow::from_report(v, &run_scenario(&sc).report)
        })
        .collect()
}

/// Worst exit code over the rows: any failing row makes the sweep fail.
pub fn sweep_exit_code(rows: &[SweepRow]) -> i32 {
    if rows.iter().all(|r| r.exit_code == EXIT_OK) {
        EXIT_OK
    } else {
        EXIT_CHECK
    }
}

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "value", "lambda0", "Lambda", "Gamma", "max_drift", "verdict", "exit_code", "reason",
    ])
    .map_err(csv_err)?;
    let num = |v: Option<f64>| v.map(|x| format!("{x:.16e}")).unwrap_or_default();
    for r in rows {
        let verdict = match r.verdict {
            Some(Verdict::Feasible) => "feasible",
            Some(Verdict::Infeasible) => "infeasible",
            None => "",
        };
        w.write_record([
            format!("{:.16e}", r.value),
            num(r.lambda0),
            num(r.lambda),
            num(r.growth),
            num(r.max_drift),
            verdict.to_string(),
            r.exit_code.to_string(),
            r.reason.clone(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}
