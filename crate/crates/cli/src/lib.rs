//! `krflow`: batch runs of the flow with certificate reporting.
//!
//! Exit codes: 0 when every selected certificate passes, 1 when one fails,
//! 2 for configuration or input errors, 3 for solver failures.

pub mod commands;
pub mod config;
pub mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub use commands::{run, sweep, verify, RunArtifacts, SweepAxis};
pub use config::RunConfig;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("solver failure: {message}")]
    Solver {
        message: String,
        checkpoint: Option<PathBuf>,
    },
    #[error("i/o: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Io(_) => 2,
            CliError::Solver { .. } => 3,
        }
    }
}

/// Outcome of a command that ran to completion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Passed,
    CertificateFailed,
    SolverFailed,
}

impl Status {
    pub fn exit_code(self) -> u8 {
        match self {
            Status::Passed => 0,
            Status::CertificateFailed => 1,
            Status::SolverFailed => 3,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "krflow", version, about = "Spectral Kahler-Ricci flow laboratory on flat tori")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Integrate one scenario, evaluate the monitors and write series.csv,
    /// summary.json and checkpoints.
    Run {
        #[command(flatten)]
        opts: RunOpts,
    },
    /// Re-run the monitors on stored checkpoints and print the residual table.
    Verify {
        /// Checkpoint files (KRFL format).
        #[arg(required = true)]
        checkpoints: Vec<PathBuf>,
        /// Largest spacing of five consecutive, evenly spaced checkpoints that
        /// is used as a time-difference stencil.
        #[arg(long, default_value_t = 0.05)]
        max_stencil_spacing: f64,
        #[command(flatten)]
        opts: RunOpts,
    },
    /// Repeat a run across values of one parameter and write sweep.csv with
    /// residual maxima and successive convergence ratios.
    Sweep {
        #[arg(long, value_enum)]
        axis: SweepAxis,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', num_args = 0..)]
        values: Vec<f64>,
        #[command(flatten)]
        opts: RunOpts,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MonitorGroup {
    Residuals,
    MaxPrinciple,
    Schwarz,
    Gradient,
    Laplacian,
    FiniteTime,
    Plateau,
}

/// Flags shared by every command; each overrides the matching config key.
#[derive(Debug, Clone, Default, Args)]
pub struct RunOpts {
    /// TOML config file (or a summary.json from an earlier run).
    #[arg(long, short)]
    pub config: Option<PathBuf>,
    /// Catalog scenario: ke_fixed_point, homogeneous, generic_ample,
    /// fibration, finite_time. [config: scenario.name]
    #[arg(long)]
    pub scenario: Option<String>,
    /// Complex dimension, 1 or 2. [config: scenario.n, default 2]
    #[arg(long = "n")]
    pub dim: Option<usize>,
    /// Grid points per resolved axis, even and >= 8. [config: grid.N, default 16]
    #[arg(long = "N")]
    pub points: Option<usize>,
    /// homogeneous: omega_0 = a I. [config: scenario.a, default 2]
    #[arg(long)]
    pub a: Option<f64>,
    /// homogeneous: omega_inf = b I. [config: scenario.b, default 1]
    #[arg(long)]
    pub b: Option<f64>,
    /// finite_time: degeneration time T. [config: scenario.horizon, default 1]
    #[arg(long)]
    pub horizon: Option<f64>,
    /// Seed of the random catalog potentials. [config: seed, default 7]
    #[arg(long)]
    pub seed: Option<u64>,
    /// End time. [config: time.t_end, default: the scenario's]
    #[arg(long)]
    pub t_end: Option<f64>,
    /// Snapshot spacing. [config: time.dt_out, default 0.5]
    #[arg(long)]
    pub dt_out: Option<f64>,
    /// Explicit snapshot times, comma-separated. [config: time.times]
    #[arg(long, value_delimiter = ',')]
    pub times: Option<Vec<f64>>,
    /// Step-size safety factor. [config: integrator.sigma, default 0.63]
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Fixed step instead of the stability rule. [config: integrator.fixed_dt]
    #[arg(long)]
    pub fixed_dt: Option<f64>,
    /// Stop this far before a finite horizon. [config: integrator.eps_t, default 1e-3]
    #[arg(long)]
    pub eps_t: Option<f64>,
    /// Upper bound for u; computed from the background when absent. [config: monitors.c_u]
    #[arg(long)]
    pub c_u: Option<f64>,
    /// Denominator constant of the gradient/Laplacian quantities. [config: monitors.c_v, default 10]
    #[arg(long)]
    pub c_v: Option<f64>,
    /// Early-time bound for finite-time runs; derived when absent. [config: monitors.c_early]
    #[arg(long)]
    pub c_early: Option<f64>,
    /// Monitor groups to evaluate (replaces the configured selection).
    /// [config: monitors.selection.*, default: all but plateau]
    #[arg(long, value_enum, value_delimiter = ',')]
    pub monitors: Option<Vec<MonitorGroup>>,
    /// Also assert plateaus over the second half of the run. [config: monitors.selection.plateau]
    #[arg(long)]
    pub plateau: bool,
    /// Output directory; relative paths go under $KRFLOW_OUT when set.
    /// [config: output.dir, default runs/<scenario>]
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Checkpoint every K snapshots (0: final only). [config: output.checkpoint_every]
    #[arg(long)]
    pub checkpoint_every: Option<usize>,
    /// Print less.
    #[arg(long, short)]
    pub quiet: bool,
}

impl RunOpts {
    /// The config file (if any) with the flags applied on top.
    pub fn config(&self) -> Result<RunConfig, CliError> {
        let mut c = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        self.apply(&mut c);
        Ok(c)
    }

    pub fn apply(&self, c: &mut RunConfig) {
        if let Some(s) = &self.scenario {
            c.scenario.name = Some(s.clone());
            c.scenario.inline = None;
        }
        macro_rules! set {
            ($flag:expr => $($field:tt)+) => {
                if let Some(v) = $flag.clone() {
                    c.$($field)+ = v;
                }
            };
        }
        set!(self.dim => scenario.n);
        set!(self.points => grid.points);
        set!(self.a => scenario.a);
        set!(self.b => scenario.b);
        set!(self.horizon => scenario.horizon);
        set!(self.seed => seed);
        set!(self.sigma => integrator.sigma);
        set!(self.eps_t => integrator.eps_t);
        set!(self.c_v => monitors.c_v);
        set!(self.checkpoint_every => output.checkpoint_every);
        if self.t_end.is_some() {
            c.time.t_end = self.t_end;
        }
        if self.dt_out.is_some() {
            c.time.dt_out = self.dt_out;
            c.time.times = None;
        }
        if self.times.is_some() {
            c.time.times = self.times.clone();
            c.time.dt_out = None;
        }
        if self.fixed_dt.is_some() {
            c.integrator.fixed_dt = self.fixed_dt;
        }
        if self.c_u.is_some() {
            c.monitors.c_u = self.c_u;
        }
        if self.c_early.is_some() {
            c.monitors.c_early = self.c_early;
        }
        if let Some(groups) = &self.monitors {
            let s = &mut c.monitors.selection;
            let has = |g| groups.contains(&g);
            s.residuals = has(MonitorGroup::Residuals);
            s.max_principle = has(MonitorGroup::MaxPrinciple);
            s.schwarz = has(MonitorGroup::Schwarz);
            s.gradient = has(MonitorGroup::Gradient);
            s.laplacian = has(MonitorGroup::Laplacian);
            s.finite_time = has(MonitorGroup::FiniteTime);
            s.plateau = has(MonitorGroup::Plateau);
        }
        if self.plateau {
            c.monitors.selection.plateau = true;
        }
        if self.out.is_some() {
            c.output.dir = self.out.clone();
        }
    }
}

fn dispatch(cli: Cli) -> Result<Status, CliError> {
    match cli.command {
        Command::Run { opts } => {
            let config = opts.config()?;
            Ok(run(config, opts.quiet)?.status)
        }
        Command::Verify {
            checkpoints,
            max_stencil_spacing,
            opts,
        } => {
            let config = opts.config()?;
            verify(&config, &checkpoints, max_stencil_spacing, opts.points, opts.quiet)
        }
        Command::Sweep { axis, values, opts } => {
            let config = opts.config()?;
            Ok(sweep(&config, axis, &values, opts.quiet)?.status)
        }
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn main_with<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(status) => status.exit_code(),
        Err(e) => {
            eprintln!("krflow: {e}");
            if let CliError::Solver {
                checkpoint: Some(p), ..
            } = &e
            {
                eprintln!("krflow: last good state written to {}", p.display());
            }
            e.exit_code()
        }
    }
}

pub fn main_exit() -> ExitCode {
    ExitCode::from(main_with(std::env::args_os()))
}
