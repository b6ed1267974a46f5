//! Data files written by the commands. Column sets are fixed per
//! [`FORMAT_VERSION`], which is stamped on the first line of every CSV.

use std::io::Write;
use std::path::{Path, PathBuf};

use krflow_core::estimates::{CertificateSummary, MonitorReport, SnapshotRow};
use krflow_core::{CertificateConstants, Scenario, Termination};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::CliError;

pub const FORMAT_VERSION: u32 = 1;

pub const SERIES_COLUMNS: [&str; 22] = [
    "t",
    "sup_u",
    "sup_udot",
    "sup_v",
    "min_v",
    "sup_phi",
    "sup_Psi",
    "sup_negLapV",
    "sup_R_tw",
    "min_R_tw",
    "res_first_tderiv",
    "res_v_evolution",
    "res_curvature",
    "res_twisted_scalar",
    "res_gradient",
    "res_laplacian",
    "res_laplacian_identity",
    "res_fiber_chain",
    "max_log_phi_excess",
    "volume_m",
    "min_eig_g",
    "dt",
];

/// The residual columns, in series order; sweeps report their maxima.
pub const RESIDUAL_COLUMNS: [&str; 8] = [
    "res_first_tderiv",
    "res_v_evolution",
    "res_curvature",
    "res_twisted_scalar",
    "res_gradient",
    "res_laplacian",
    "res_laplacian_identity",
    "res_fiber_chain",
];

pub fn residual_values(row: &SnapshotRow) -> [Option<f64>; 8] {
    [
        row.res_first_tderiv,
        row.res_v_evolution,
        row.res_curvature,
        row.res_twisted_scalar,
        row.res_gradient,
        row.res_laplacian,
        row.res_laplacian_identity,
        row.res_fiber_chain,
    ]
}

fn row_values(row: &SnapshotRow) -> Vec<Option<f64>> {
    let mut v = vec![
        Some(row.t),
        Some(row.sup_u),
        Some(row.sup_udot),
        Some(row.sup_v),
        Some(row.min_v),
        row.sup_phi,
        row.sup_psi,
        row.sup_neg_lap_v,
        row.sup_r_tw,
        row.min_r_tw,
    ];
    v.extend(residual_values(row));
    v.extend([row.max_log_phi_excess, row.volume_m, Some(row.min_eig_g), Some(row.dt)]);
    v
}

/// Shortest round-trip representation; empty for a missing value.
pub fn fmt_cell(x: Option<f64>) -> String {
    x.map(|x| format!("{x:e}")).unwrap_or_default()
}

fn version_line(kind: &str) -> String {
    format!("# krflow {kind} v{FORMAT_VERSION} ({})\n", env!("CARGO_PKG_VERSION"))
}

fn csv_err(e: csv::Error) -> CliError {
    CliError::Io(e.to_string())
}

fn write_csv(path: &Path, kind: &str, header: &[String], rows: &[Vec<String>]) -> Result<(), CliError> {
    let mut file = std::fs::File::create(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    file.write_all(version_line(kind).as_bytes())
        .map_err(|e| CliError::Io(e.to_string()))?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(header).map_err(csv_err)?;
    for r in rows {
        w.write_record(r).map_err(csv_err)?;
    }
    w.flush().map_err(|e| CliError::Io(e.to_string()))
}

pub fn write_series(path: &Path, rows: &[SnapshotRow]) -> Result<(), CliError> {
    let header: Vec<String> = SERIES_COLUMNS.iter().map(|s| s.to_string()).collect();
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| row_values(r).into_iter().map(fmt_cell).collect())
        .collect();
    write_csv(path, "series", &header, &body)
}

/// A parsed CSV written by this crate: header and cells (`None` when empty).
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<Option<f64>>>,
    pub text_rows: Vec<Vec<String>>,
}

impl Table {
    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        let body = text.split_once('\n').map(|(_, b)| b).unwrap_or("");
        let mut r = csv::Reader::from_reader(body.as_bytes());
        let header = r.headers().map_err(csv_err)?.iter().map(String::from).collect();
        let mut rows = Vec::new();
        let mut text_rows = Vec::new();
        for rec in r.records() {
            let rec = rec.map_err(csv_err)?;
            text_rows.push(rec.iter().map(String::from).collect());
            rows.push(rec.iter().map(|c| c.parse().ok()).collect());
        }
        Ok(Self { header, rows, text_rows })
    }

    pub fn column(&self, name: &str) -> Option<Vec<Option<f64>>> {
        let i = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub format_version: u32,
    pub krflow_version: String,
    pub passed: bool,
    /// The fully resolved configuration; feeding it back reproduces the run.
    pub config: RunConfig,
    pub scenario: Scenario,
    pub constants: CertificateConstants,
    pub certificates: Vec<CertificateSummary>,
    pub termination: Option<Termination>,
    pub failure: Option<String>,
    pub snapshots: usize,
    pub steps: u64,
    pub wall_time_s: f64,
    pub checkpoints: Vec<PathBuf>,
    pub derivative_paths: std::collections::BTreeMap<String, String>,
    pub warnings: Vec<String>,
}

impl Summary {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        config: &RunConfig,
        scenario: &Scenario,
        report: &MonitorReport,
        termination: Option<Termination>,
        failure: Option<String>,
        steps: u64,
        wall_time_s: f64,
        checkpoints: Vec<PathBuf>,
    ) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            krflow_version: env!("CARGO_PKG_VERSION").into(),
            passed: failure.is_none() && report.all_passed(),
            config: config.clone(),
            scenario: scenario.clone(),
            constants: report.constants,
            certificates: report.certificates.clone(),
            termination,
            failure,
            snapshots: report.rows.len(),
            steps,
            wall_time_s,
            checkpoints,
            derivative_paths: report.derivative_paths.clone(),
            warnings: report.warnings.clone(),
        }
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(self).expect("summaries serialize");
        std::fs::write(path, text + "\n").map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }
}

/// One line per certificate for the terminal.
pub fn certificate_table(certs: &[CertificateSummary]) -> String {
    let width = certs.iter().map(|c| c.name.len()).max().unwrap_or(0);
    let mut out = String::new();
    for c in certs {
        let status = if !c.passed {
            "FAIL"
        } else if c.evaluations == 0 {
            "skip"
        } else {
            "ok"
        };
        let margin = c.worst_margin.map(|m| format!("{m:+.3e}")).unwrap_or_else(|| "-".into());
        let at = match (c.worst_t, c.witness) {
            (Some(t), Some(w)) => format!("t = {t:.4}, point {}", w.index),
            (Some(t), None) => format!("t = {t:.4}"),
            _ => String::new(),
        };
        out.push_str(&format!(
            "{:<width$}  {status:<4}  margin {margin:>11}  n = {:<4} skipped = {:<3} {at}\n",
            c.name, c.evaluations, c.skipped
        ));
    }
    out
}

pub fn write_sweep(path: &Path, header: &[String], rows: &[Vec<String>]) -> Result<(), CliError> {
    write_csv(path, "sweep", header, rows)
}
