use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::ValueEnum;
use krflow_core::estimates::{MonitorReport, MonitorSuite};
use krflow_core::flow::{Stencil, STENCIL_OFFSETS};
use krflow_core::oracles::solve_homogeneous;
use krflow_core::{
    Background, Checkpoint, Error, FlowState, Integrator, ScalarField, Scenario, Snapshot,
};
use rayon::prelude::*;

use crate::config::RunConfig;
use crate::output::{self, fmt_cell, residual_values, Summary, RESIDUAL_COLUMNS};
use crate::{CliError, Status};

/// Everything a finished run leaves behind.
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub dir: PathBuf,
    pub status: Status,
    pub summary: Summary,
    pub report: MonitorReport,
    pub final_u: Option<ScalarField>,
}

fn scenario_error(e: Error) -> CliError {
    CliError::Config(format!("scenario: {e}"))
}

fn io(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| CliError::Io(format!("{}: {e}", path.display()))
}

/// Integrates the configured scenario, writing `series.csv`, `summary.json`
/// and checkpoints into the output directory.
///
/// A solver failure still writes the series and summary up to the failure,
/// plus a `last_good.krfl` checkpoint, and is returned as [`CliError::Solver`].
pub fn run(mut config: RunConfig, quiet: bool) -> Result<RunArtifacts, CliError> {
    let scenario = config.resolve()?;
    let schedule = config.schedule()?;
    let bg = Background::new(scenario.clone(), config.grid.points).map_err(scenario_error)?;
    let integrator = Integrator::new(&bg, config.integrator).map_err(scenario_error)?;
    let mut suite = MonitorSuite::new(&bg, config.monitors).map_err(scenario_error)?;

    let dir = config.output_dir();
    let ckpt_dir = dir.join("checkpoints");
    std::fs::create_dir_all(&ckpt_dir).map_err(io(&ckpt_dir))?;
    if !quiet {
        println!(
            "krflow run: {} (n = {}, N = {}) to t = {} -> {}",
            scenario.name,
            scenario.n,
            config.grid.points,
            config.time.t_end.unwrap_or(0.0),
            dir.display()
        );
    }

    let started = Instant::now();
    let every = config.output.checkpoint_every;
    let mut checkpoints = Vec::new();
    let mut count = 0usize;
    let outcome = integrator.run(&schedule, |snap| {
        suite.observe(snap)?;
        count += 1;
        if every > 0 && count % every == 0 {
            let p = ckpt_dir.join(format!("snap_{count:04}.krfl"));
            checkpoint_of(&snap.state).write(&p)?;
            checkpoints.push(p);
        }
        if !quiet {
            let row = suite.rows().last().expect("row just recorded");
            println!(
                "  t = {:<10.6} sup u = {:+.6e}  sup udot = {:+.6e}  min eig = {:.4e}",
                row.t, row.sup_u, row.sup_udot, row.min_eig_g
            );
        }
        Ok(())
    });
    let wall = started.elapsed().as_secs_f64();
    let report = suite.finish();

    let (termination, failure, steps, final_u, solver_err) = match outcome {
        Ok(out) => {
            let p = ckpt_dir.join("final.krfl");
            checkpoint_of(&out.final_state).write(&p).map_err(|e| CliError::Io(e.to_string()))?;
            checkpoints.push(p);
            (Some(out.termination), None, out.final_state.step_count, Some(out.final_state.u), None)
        }
        Err(f) => {
            let p = ckpt_dir.join("last_good.krfl");
            checkpoint_of(&f.last_good).write(&p).map_err(|e| CliError::Io(e.to_string()))?;
            checkpoints.push(p.clone());
            let msg = f.to_string();
            (None, Some(msg.clone()), f.last_good.step_count, None, Some((msg, p)))
        }
    };

    output::write_series(&dir.join("series.csv"), &report.rows)?;
    let summary = Summary::new(&config, &scenario, &report, termination, failure, steps, wall, checkpoints);
    summary.write(&dir.join("summary.json"))?;
    if !quiet {
        print!("{}", output::certificate_table(&report.certificates));
        for w in &report.warnings {
            println!("warning: {w}");
        }
    }
    if let Some((message, checkpoint)) = solver_err {
        return Err(CliError::Solver {
            message,
            checkpoint: Some(checkpoint),
        });
    }
    let status = if summary.passed {
        Status::Passed
    } else {
        Status::CertificateFailed
    };
    if !quiet {
        println!(
            "{} ({} steps, {:.1} s)",
            if summary.passed { "PASS" } else { "FAIL" },
            steps,
            wall
        );
    }
    Ok(RunArtifacts {
        dir,
        status,
        summary,
        report,
        final_u,
    })
}

fn checkpoint_of(state: &FlowState) -> Checkpoint {
    Checkpoint {
        t: state.t,
        u: state.u.clone(),
    }
}

/// Reloads checkpoints, rebuilds the states and re-runs the monitors.
///
/// Five consecutive checkpoints evenly spaced by at most `max_spacing` give
/// the middle one a time-difference stencil; everywhere else the monitors
/// that need one are reported as skipped.
pub fn verify(
    config: &RunConfig,
    paths: &[PathBuf],
    max_spacing: f64,
    points: Option<usize>,
    quiet: bool,
) -> Result<Status, CliError> {
    let mut ckpts = paths
        .iter()
        .map(|p| Checkpoint::read(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display()))))
        .collect::<Result<Vec<_>, _>>()?;
    let spec = ckpts[0].u.spec();
    if ckpts.iter().any(|c| c.u.spec() != spec) {
        return Err(CliError::Config("checkpoints are on different grids".into()));
    }
    if let Some(p) = points {
        if p != spec.points() {
            return Err(CliError::Config(format!(
                "--N {p} does not match the checkpoint grid (N = {})",
                spec.points()
            )));
        }
    }
    let mut config = config.clone();
    config.grid.points = spec.points();
    config.scenario.n = spec.n();
    let scenario = config.build_scenario()?;
    let bg = Background::new(scenario, spec.points()).map_err(scenario_error)?;
    if bg.spec() != spec {
        return Err(CliError::Config(format!(
            "checkpoint grid {:?} does not fit scenario `{}`",
            spec.shape(),
            bg.scenario().name
        )));
    }
    ckpts.sort_by(|a, b| a.t.total_cmp(&b.t));
    if ckpts.windows(2).any(|w| w[0].t == w[1].t) {
        return Err(CliError::Config("two checkpoints share the same time".into()));
    }
    let states = ckpts
        .into_iter()
        .map(|c| FlowState::from_potential(&bg, c.t, c.u))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| CliError::Solver {
            message: format!("stored state is not a Kahler potential: {e}"),
            checkpoint: None,
        })?;

    let mut suite = MonitorSuite::new(&bg, config.monitors).map_err(scenario_error)?;
    for (i, state) in states.iter().enumerate() {
        let stencil = stencil_around(&states, i, max_spacing);
        let snap = Snapshot {
            state: state.clone(),
            stencil,
        };
        suite.observe(&snap).map_err(|e| CliError::Solver {
            message: format!("monitor evaluation at t = {}: {e}", state.t),
            checkpoint: None,
        })?;
    }
    let report = suite.finish();
    if !quiet {
        println!("{}", residual_table(&report));
        print!("{}", output::certificate_table(&report.certificates));
    }
    Ok(if report.all_passed() {
        Status::Passed
    } else {
        Status::CertificateFailed
    })
}

fn stencil_around(states: &[FlowState], i: usize, max_spacing: f64) -> Option<Stencil> {
    if i < 2 || i + 2 >= states.len() {
        return None;
    }
    let t = states[i].t;
    let h = t - states[i - 1].t;
    if !(h > 0.0 && h <= max_spacing) {
        return None;
    }
    let idx = [i - 2, i - 1, i + 1, i + 2];
    let even = idx
        .iter()
        .zip(STENCIL_OFFSETS)
        .all(|(&j, k)| (states[j].t - (t + k * h)).abs() <= 1e-9 * h);
    if !even {
        return None;
    }
    Some(Stencil {
        h,
        u: idx.map(|j| states[j].u.clone()),
        udot: idx.map(|j| states[j].udot.clone()),
    })
}

fn residual_table(report: &MonitorReport) -> String {
    let mut out = format!("{:>12}", "t");
    for c in RESIDUAL_COLUMNS {
        out.push_str(&format!(" {:>14}", c.trim_start_matches("res_")));
    }
    for row in &report.rows {
        out.push_str(&format!("\n{:>12.6}", row.t));
        for v in residual_values(row) {
            let cell = v.map(|x| format!("{x:.3e}")).unwrap_or_else(|| "skipped".into());
            out.push_str(&format!(" {cell:>14}"));
        }
    }
    out
}

/// Parameter varied by `sweep`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SweepAxis {
    /// Grid points per axis.
    #[value(name = "N")]
    Points,
    /// Fixed time step.
    Dt,
    A,
    B,
    Horizon,
    Seed,
    Sigma,
}

impl SweepAxis {
    pub fn label(self) -> &'static str {
        match self {
            SweepAxis::Points => "N",
            SweepAxis::Dt => "dt",
            SweepAxis::A => "a",
            SweepAxis::B => "b",
            SweepAxis::Horizon => "horizon",
            SweepAxis::Seed => "seed",
            SweepAxis::Sigma => "sigma",
        }
    }

    fn apply(self, c: &mut RunConfig, v: f64) -> Result<(), CliError> {
        let whole = |v: f64| -> Result<u64, CliError> {
            if v >= 0.0 && v.fract() == 0.0 {
                Ok(v as u64)
            } else {
                Err(CliError::Config(format!("{} takes whole numbers, got {v}", self.label())))
            }
        };
        match self {
            SweepAxis::Points => c.grid.points = whole(v)? as usize,
            SweepAxis::Dt => c.integrator.fixed_dt = Some(v),
            SweepAxis::A => c.scenario.a = v,
            SweepAxis::B => c.scenario.b = v,
            SweepAxis::Horizon => c.scenario.horizon = v,
            SweepAxis::Seed => c.seed = whole(v)?,
            SweepAxis::Sigma => c.integrator.sigma = v,
        }
        Ok(())
    }
}

/// One sweep point.
#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub value: f64,
    pub exit_code: u8,
    pub passed: bool,
    pub steps: Option<u64>,
    pub worst_margin: Option<f64>,
    pub failed_certificates: usize,
    pub residuals: [Option<f64>; 8],
    pub oracle_error: Option<f64>,
    /// `sup |u_final - u_final(previous value)|` on a shared grid.
    pub self_diff: Option<f64>,
    pub final_u: Option<ScalarField>,
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub status: Status,
    pub dir: PathBuf,
    pub points: Vec<SweepPoint>,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

/// The spatially homogeneous ODE parameters `(a, b, c0)` when the scenario
/// has no potentials.
pub fn homogeneous_parameters(s: &Scenario) -> Option<(f64, f64, f64)> {
    let scalar = |m: &krflow_core::HermitianMatrix| {
        let a = m.get(0, 0).re;
        (m.operator_norm() - a).abs() <= 1e-15 * a.abs() && (m.trace() - s.n as f64 * a).abs() <= 1e-15 * a.abs()
    };
    let flat = s.psi0.modes.is_empty() && s.psi_inf.modes.is_empty() && s.log_omega.modes.is_empty();
    (flat && s.horizon.is_none() && scalar(&s.b0) && scalar(&s.b_inf)).then(|| {
        (
            s.b0.get(0, 0).re,
            s.b_inf.get(0, 0).re,
            -s.log_omega.constant,
        )
    })
}

fn oracle_error(art: &RunArtifacts) -> Option<f64> {
    let s = &art.summary.scenario;
    let (a, b, c0) = homogeneous_parameters(s)?;
    let ts: Vec<f64> = art.report.rows.iter().map(|r| r.t).collect();
    let tr = solve_homogeneous(a, b, c0, s.n, &ts).ok()?;
    Some(
        art.report
            .rows
            .iter()
            .zip(&tr.u)
            .map(|(r, u)| (r.sup_u - u).abs())
            .fold(0.0, f64::max),
    )
}

fn ratio(prev: Option<f64>, cur: Option<f64>) -> Option<f64> {
    match (prev, cur) {
        (Some(p), Some(c)) if c > 0.0 => Some(p / c),
        _ => None,
    }
}

/// Runs `config` once per value of `axis`, each into its own subdirectory,
/// and writes `sweep.csv`.
pub fn sweep(config: &RunConfig, axis: SweepAxis, values: &[f64], quiet: bool) -> Result<SweepOutcome, CliError> {
    if values.is_empty() {
        return Err(CliError::Config("sweep needs at least one value".into()));
    }
    let base = config.output_dir();
    let configs = values
        .iter()
        .map(|&v| {
            let mut c = config.clone();
            axis.apply(&mut c, v)?;
            c.output.dir = Some(base.join(format!("{}_{v}", axis.label())));
            let mut probe = c.clone();
            probe.resolve()?;
            Ok(c)
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    std::fs::create_dir_all(&base).map_err(io(&base))?;

    let results: Vec<Result<RunArtifacts, CliError>> = configs.into_par_iter().map(|c| run(c, true)).collect();
    let mut points = Vec::with_capacity(values.len());
    let mut status = Status::Passed;
    for (&value, r) in values.iter().zip(results) {
        let point = match r {
            Ok(art) => {
                if art.status != Status::Passed && status == Status::Passed {
                    status = art.status;
                }
                let mut residuals = [None; 8];
                for row in &art.report.rows {
                    for (slot, v) in residuals.iter_mut().zip(residual_values(row)) {
                        if let Some(v) = v {
                            *slot = Some(slot.map_or(v, |s: f64| s.max(v)));
                        }
                    }
                }
                let certs = &art.summary.certificates;
                SweepPoint {
                    value,
                    exit_code: art.status.exit_code(),
                    passed: art.summary.passed,
                    steps: Some(art.summary.steps),
                    worst_margin: certs.iter().filter_map(|c| c.worst_margin).reduce(f64::min),
                    failed_certificates: certs.iter().filter(|c| !c.passed).count(),
                    residuals,
                    oracle_error: oracle_error(&art),
                    self_diff: None,
                    final_u: art.final_u,
                }
            }
            Err(e @ CliError::Solver { .. }) => {
                if !quiet {
                    eprintln!("krflow sweep: {}={value}: {e}", axis.label());
                }
                status = Status::SolverFailed;
                SweepPoint {
                    value,
                    exit_code: e.exit_code(),
                    passed: false,
                    steps: None,
                    worst_margin: None,
                    failed_certificates: 0,
                    residuals: [None; 8],
                    oracle_error: None,
                    self_diff: None,
                    final_u: None,
                }
            }
            Err(e) => return Err(e),
        };
        points.push(point);
    }
    for i in 1..points.len() {
        let d = match (&points[i - 1].final_u, &points[i].final_u) {
            (Some(a), Some(b)) if a.spec() == b.spec() => Some(a.zip_with(b, |x, y| x - y).sup_norm()),
            _ => None,
        };
        points[i].self_diff = d;
    }

    let mut header: Vec<String> = ["axis", "value", "exit_code", "passed", "steps", "worst_margin", "failed_certificates"]
        .map(String::from)
        .to_vec();
    header.extend(RESIDUAL_COLUMNS.map(String::from));
    header.extend(["oracle_error".into(), "self_diff".into()]);
    header.extend(RESIDUAL_COLUMNS.map(|c| format!("ratio_{c}")));
    header.extend(["ratio_oracle_error".into(), "ratio_self_diff".into()]);
    let mut rows = Vec::with_capacity(points.len());
    for (i, p) in points.iter().enumerate() {
        let prev = i.checked_sub(1).map(|j| &points[j]);
        let mut row = vec![
            axis.label().to_string(),
            format!("{}", p.value),
            p.exit_code.to_string(),
            p.passed.to_string(),
            p.steps.map(|s| s.to_string()).unwrap_or_default(),
            fmt_cell(p.worst_margin),
            p.failed_certificates.to_string(),
        ];
        row.extend(p.residuals.iter().map(|&r| fmt_cell(r)));
        row.push(fmt_cell(p.oracle_error));
        row.push(fmt_cell(p.self_diff));
        for k in 0..8 {
            row.push(fmt_cell(ratio(prev.and_then(|q| q.residuals[k]), p.residuals[k])));
        }
        row.push(fmt_cell(ratio(prev.and_then(|q| q.oracle_error), p.oracle_error)));
        row.push(fmt_cell(ratio(prev.and_then(|q| q.self_diff), p.self_diff)));
        rows.push(row);
    }
    output::write_sweep(&base.join("sweep.csv"), &header, &rows)?;
    if !quiet {
        for (p, r) in points.iter().zip(&rows) {
            println!(
                "{} = {:<8} exit {}  worst margin {:>10}  oracle error {:>10}",
                axis.label(),
                p.value,
                p.exit_code,
                r[5],
                r[7 + 8]
            );
        }
        println!("sweep.csv -> {}", base.join("sweep.csv").display());
    }
    Ok(SweepOutcome {
        status,
        dir: base,
        points,
        header,
        rows,
    })
}
