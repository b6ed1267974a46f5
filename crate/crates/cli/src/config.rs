//! Run configuration: a TOML document with a fixed schema. Unknown keys are
//! rejected; command-line flags override file values.

use std::path::{Path, PathBuf};

use krflow_core::estimates::MonitorConfig;
use krflow_core::{IntegratorConfig, Scenario, ScenarioParams};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Environment variable holding the root for relative output directories.
pub const OUT_ENV: &str = "KRFLOW_OUT";

pub const DEFAULT_POINTS: usize = 16;
pub const DEFAULT_DT_OUT: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Seed of the random catalog potentials.
    pub seed: u64,
    pub scenario: ScenarioConfig,
    pub grid: GridConfig,
    pub time: TimeConfig,
    pub integrator: IntegratorConfig,
    pub monitors: MonitorConfig,
    pub output: OutputConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: ScenarioParams::default().seed,
            scenario: ScenarioConfig::default(),
            grid: GridConfig::default(),
            time: TimeConfig::default(),
            integrator: IntegratorConfig::default(),
            monitors: MonitorConfig::default(),
            output: OutputConfig::default(),
        }
    }
}

/// A catalog scenario by name, or a full scenario inline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub name: Option<String>,
    /// Complex dimension (1 or 2).
    pub n: usize,
    /// `omega_0 = a I` for `homogeneous`.
    pub a: f64,
    /// `omega_inf = b I` for `homogeneous`.
    pub b: f64,
    /// `T` for `finite_time`.
    pub horizon: f64,
    pub inline: Option<Scenario>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        let p = ScenarioParams::default();
        Self {
            name: None,
            n: p.n,
            a: p.a,
            b: p.b,
            horizon: p.horizon,
            inline: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    /// Points per resolved real axis.
    #[serde(rename = "N")]
    pub points: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { points: DEFAULT_POINTS }
    }
}

/// Snapshot schedule: explicit `times`, or `0, dt_out, 2 dt_out, ...` up to
/// `t_end` (which is always included).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TimeConfig {
    /// Defaults to the scenario's own end time.
    pub t_end: Option<f64>,
    pub dt_out: Option<f64>,
    pub times: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    /// Relative paths are taken under `$KRFLOW_OUT` when set. Defaults to
    /// `runs/<scenario name>`.
    pub dir: Option<PathBuf>,
    /// Write a checkpoint every this many snapshots (0: final state only).
    pub checkpoint_every: usize,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(format!("invalid config: {e}")))
    }

    /// Reads a TOML config, or a JSON document holding either a config or a
    /// run summary (whose embedded `config` is used).
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let is_json = path.extension().is_some_and(|e| e == "json");
        if !is_json {
            return toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())));
        }
        let value: serde_json::Value = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let value = match value.get("config") {
            Some(c) if value.get("certificates").is_some() => c.clone(),
            _ => value,
        };
        serde_json::from_value(value).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("run configs serialize to TOML")
    }

    pub fn scenario_params(&self) -> ScenarioParams {
        ScenarioParams {
            n: self.scenario.n,
            a: self.scenario.a,
            b: self.scenario.b,
            horizon: self.scenario.horizon,
            seed: self.seed,
            t_end: self.time.t_end,
        }
    }

    pub fn build_scenario(&self) -> Result<Scenario, CliError> {
        let mut s = match (&self.scenario.name, &self.scenario.inline) {
            (Some(_), Some(_)) => {
                return Err(CliError::Config(
                    "scenario: give either `name` or `inline`, not both".into(),
                ))
            }
            (None, None) => return Err(CliError::Config("scenario: `name` or `inline` is required".into())),
            (Some(name), None) => {
                Scenario::by_name(name, &self.scenario_params()).map_err(|e| CliError::Config(e.to_string()))?
            }
            (None, Some(s)) => s.clone(),
        };
        if let Some(t) = self.time.t_end {
            s.t_end = t;
        }
        Ok(s)
    }

    /// Fills every defaulted choice from the scenario so that the result
    /// reproduces the run on its own.
    pub fn resolve(&mut self) -> Result<Scenario, CliError> {
        let scenario = self.build_scenario()?;
        if self.time.t_end.is_none() {
            self.time.t_end = Some(scenario.t_end);
        }
        if self.time.times.is_none() && self.time.dt_out.is_none() {
            self.time.dt_out = Some(DEFAULT_DT_OUT);
        }
        self.integrator
            .validate()
            .map_err(|e| CliError::Config(format!("integrator: {e}")))?;
        self.schedule()?;
        Ok(scenario)
    }

    pub fn schedule(&self) -> Result<Vec<f64>, CliError> {
        let t_end = self.time.t_end.unwrap_or(0.0);
        if !(t_end >= 0.0 && t_end.is_finite()) {
            return Err(CliError::Config(format!("time.t_end must be >= 0, got {t_end}")));
        }
        if let Some(times) = &self.time.times {
            if self.time.dt_out.is_some() {
                return Err(CliError::Config("time: give either `dt_out` or `times`, not both".into()));
            }
            if times.is_empty() {
                return Err(CliError::Config("time.times is empty".into()));
            }
            if times.windows(2).any(|w| !(w[1] > w[0])) || !(times[0] >= 0.0) {
                return Err(CliError::Config("time.times must be increasing and start at t >= 0".into()));
            }
            return Ok(times.clone());
        }
        let dt = self.time.dt_out.unwrap_or(DEFAULT_DT_OUT);
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(CliError::Config(format!("time.dt_out must be positive, got {dt}")));
        }
        let count = (t_end / dt + 1e-9).floor() as usize;
        let mut out: Vec<f64> = (0..=count).map(|k| k as f64 * dt).collect();
        if t_end - out[count] > 1e-9 * dt {
            out.push(t_end);
        } else {
            out[count] = t_end;
        }
        Ok(out)
    }

    pub fn scenario_label(&self) -> String {
        match (&self.scenario.name, &self.scenario.inline) {
            (Some(n), _) => n.clone(),
            (None, Some(s)) => s.name.clone(),
            _ => "run".into(),
        }
    }

    /// The output directory, resolved against `$KRFLOW_OUT`.
    pub fn output_dir(&self) -> PathBuf {
        let dir = self
            .output
            .dir
            .clone()
            .unwrap_or_else(|| Path::new("runs").join(self.scenario_label()));
        resolve_out(&dir)
    }
}

pub fn resolve_out(dir: &Path) -> PathBuf {
    if dir.is_absolute() {
        return dir.to_path_buf();
    }
    match std::env::var_os(OUT_ENV) {
        Some(root) if !root.is_empty() => Path::new(&root).join(dir),
        _ => dir.to_path_buf(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_key_is_named() {
        let err = RunConfig::from_toml_str("gird_N = 16\n").unwrap_err();
        assert!(err.to_string().contains("gird_N"), "{err}");
        let err = RunConfig::from_toml_str("[grid]\nM = 3\n").unwrap_err();
        assert!(err.to_string().contains('M'), "{err}");
    }

    #[test]
    fn nested_keys_parse() {
        let c = RunConfig::from_toml_str(
            "seed = 3\n[scenario]\nname = \"homogeneous\"\nn = 1\na = 3.0\n[grid]\nN = 12\n\
             [time]\nt_end = 2.0\ndt_out = 0.5\n[monitors]\nc_v = 20.0\n[monitors.selection]\nplateau = true\n",
        )
        .unwrap();
        assert_eq!(c.grid.points, 12);
        assert_eq!(c.scenario.a, 3.0);
        assert!(c.monitors.selection.plateau);
        assert_eq!(c.schedule().unwrap(), vec![0.0, 0.5, 1.0, 1.5, 2.0]);
    }

    #[test]
    fn schedule_includes_t_end() {
        let mut c = RunConfig::default();
        c.time.t_end = Some(1.2);
        c.time.dt_out = Some(0.5);
        assert_eq!(c.schedule().unwrap(), vec![0.0, 0.5, 1.0, 1.2]);
        c.time.times = Some(vec![]);
        assert!(c.schedule().is_err());
    }

    #[test]
    fn resolved_config_round_trips() {
        let mut c = RunConfig::default();
        c.scenario.name = Some("generic_ample".into());
        c.resolve().unwrap();
        let back = RunConfig::from_toml_str(&c.to_toml_string()).unwrap();
        assert_eq!(back, c);
        let json = serde_json::to_string(&c).unwrap();
        assert_eq!(serde_json::from_str::<RunConfig>(&json).unwrap(), c);
    }

    #[test]
    fn inline_scenario_round_trips() {
        let mut c = RunConfig::default();
        c.scenario.inline = Some(Scenario::fibration(4));
        let back = RunConfig::from_toml_str(&c.to_toml_string()).unwrap();
        assert_eq!(back.build_scenario().unwrap(), Scenario::fibration(4));
    }
}
