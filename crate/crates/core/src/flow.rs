//! Method-of-lines integrator for the potential equation
//! `du/dt = log det(omega_t + i d dbar u) - log Omega - u` with `u(0) = 0`.
//!
//! Time stepping is classical RK4 under an explicit stability rule. Scheduled
//! snapshots are landed on exactly, and each one carries a symmetric stencil
//! of four neighbouring states (offsets `-2h, -h, +h, +2h`). The monitors use
//! it for fourth-order finite differences in time.

use serde::{Deserialize, Serialize};

use crate::background::Background;
use crate::error::{Error, Result};
use crate::grid::ScalarField;
use crate::hermitian::{trace_pair, HermitianField, HermitianMatrix};

/// Stability margin of RK4 on the heat operator (2.8 on the negative real
/// axis), shared among the four second-derivative channels, with 10% slack.
pub const DEFAULT_SIGMA: f64 = 0.9 * 2.8 / 4.0;
pub const DEFAULT_EPS_T: f64 = 1e-3;
pub const MAX_HALVINGS: u32 = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IntegratorConfig {
    /// Multiplier in `dt = sigma / (lambda_max K^2)`.
    pub sigma: f64,
    /// Stop short of a finite horizon by this much.
    pub eps_t: f64,
    /// Use this step instead of the stability rule (convergence studies).
    pub fixed_dt: Option<f64>,
    pub max_halvings: u32,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            sigma: DEFAULT_SIGMA,
            eps_t: DEFAULT_EPS_T,
            fixed_dt: None,
            max_halvings: MAX_HALVINGS,
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::Scenario(format!("sigma must be positive, got {}", self.sigma)));
        }
        if !(self.eps_t > 0.0 && self.eps_t.is_finite()) {
            return Err(Error::Scenario(format!("eps_T must be positive, got {}", self.eps_t)));
        }
        if let Some(dt) = self.fixed_dt {
            if !(dt > 0.0 && dt.is_finite()) {
                return Err(Error::Scenario(format!("fixed dt must be positive, got {dt}")));
            }
        }
        Ok(())
    }
}

/// A coherent point on the trajectory: `udot` and `g_tilde` are always the
/// right-hand side and metric of `u` at `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowState {
    pub t: f64,
    pub u: ScalarField,
    pub udot: ScalarField,
    pub g_tilde: HermitianField,
    pub step_count: u64,
    pub dt_current: f64,
}

impl FlowState {
    /// Rebuilds the cached fields for `u` at `t`.
    pub fn from_potential(bg: &Background, t: f64, u: ScalarField) -> Result<Self> {
        let (udot, g_tilde) = rhs(bg, &u, t)?;
        Ok(Self {
            t,
            u,
            udot,
            g_tilde,
            step_count: 0,
            dt_current: 0.0,
        })
    }

    pub fn initial(bg: &Background) -> Result<Self> {
        Self::from_potential(bg, 0.0, ScalarField::zeros(bg.spec()))
    }
}

/// Flowing metric `omega_t + i d dbar u` and `du/dt`.
pub fn rhs(bg: &Background, u: &ScalarField, t: f64) -> Result<(ScalarField, HermitianField)> {
    let omega_t = bg.interpolate_background(t)?;
    let hess = bg.grid().complex_hessian(u)?;
    let g = omega_t.lin_comb(1.0, &hess, 1.0);
    g.check_metric().map_err(|e| match e {
        Error::Positivity {
            index,
            min_eigenvalue,
            ..
        } => Error::KahlerLost {
            t,
            index,
            min_eigenvalue,
        },
        other => other,
    })?;
    let ld = g.map_scalar(|m| m.det().ln());
    let udot = ld
        .zip_with(bg.log_omega(), |a, b| a - b)
        .zip_with(u, |a, b| a - b);
    udot.check_finite()?;
    Ok((udot, g))
}

/// `d^2u/dt^2 = -e^{-t} tr_g(omega_0 - omega_inf) + Lap(udot) - udot`.
pub fn second_time_derivative(bg: &Background, state: &FlowState) -> Result<ScalarField> {
    let tr = trace_pair(&state.g_tilde, bg.delta())?;
    let lap = bg.grid().laplacian(&state.g_tilde, &state.udot)?;
    let e = (-state.t).exp();
    Ok(lap
        .zip_with(&tr, |l, tr| l - e * tr)
        .zip_with(&state.udot, |a, b| a - b))
}

/// Stable explicit step for the metric `g`: `sigma / (lambda_max K^2)`.
///
/// `lambda_max` is the top eigenvalue of `g^{-1}` restricted to the directions
/// the grid resolves, so a collapsed fiber does not throttle the step.
pub fn stable_dt(g: &HermitianField, sigma: f64) -> f64 {
    let spec = g.spec();
    let n = spec.n();
    let k: Vec<f64> = (0..n).map(|j| spec.direction_wavenumber(j)).collect();
    let k_top = k.iter().cloned().fold(0.0, f64::max);
    let w: Vec<f64> = k.iter().map(|&kj| kj / k_top).collect();
    let lambda = g
        .map_scalar(|m| {
            let inv = m.inverse();
            let mut b = *inv.block();
            for i in 0..n {
                for j in 0..n {
                    b[i][j] *= w[i] * w[j];
                }
            }
            HermitianMatrix::from_upper(n, b).max_eigenvalue()
        })
        .max();
    sigma / (lambda * k_top * k_top)
}

/// Symmetric neighbours of a snapshot, at offsets `-2h, -h, +h, +2h`.
#[derive(Debug, Clone)]
pub struct Stencil {
    pub h: f64,
    pub u: [ScalarField; 4],
    pub udot: [ScalarField; 4],
}

pub const STENCIL_OFFSETS: [f64; 4] = [-2.0, -1.0, 1.0, 2.0];

impl Stencil {
    /// Fourth-order central difference of `f(t, u, udot)` at the centre.
    pub fn derivative(
        &self,
        t: f64,
        f: impl Fn(f64, &ScalarField, &ScalarField) -> Result<ScalarField>,
    ) -> Result<ScalarField> {
        let vals = (0..4)
            .map(|i| f(t + STENCIL_OFFSETS[i] * self.h, &self.u[i], &self.udot[i]))
            .collect::<Result<Vec<_>>>()?;
        let h = self.h;
        let out = vals[0]
            .zip_with(&vals[1], |a, b| a - 8.0 * b)
            .zip_with(&vals[2], |a, b| a + 8.0 * b)
            .zip_with(&vals[3], |a, b| (a - b) / (12.0 * h));
        Ok(out)
    }
}

/// State handed to observers at a scheduled time.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub state: FlowState,
    /// Absent at `t = 0` and where the horizon leaves no room.
    pub stencil: Option<Stencil>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Termination {
    Completed,
    HorizonReached { t: f64 },
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub final_state: FlowState,
    pub snapshots: usize,
    pub termination: Termination,
}

/// A failed run: the error and the last accepted state.
#[derive(Debug)]
pub struct RunFailure {
    pub error: Error,
    pub last_good: Box<FlowState>,
}

impl std::fmt::Display for RunFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} (last good state at t = {})", self.error, self.last_good.t)
    }
}

impl std::error::Error for RunFailure {}

/// RK4 driver for one background.
#[derive(Debug)]
pub struct Integrator<'a> {
    bg: &'a Background,
    config: IntegratorConfig,
}

impl<'a> Integrator<'a> {
    pub fn new(bg: &'a Background, config: IntegratorConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self { bg, config })
    }

    pub fn background(&self) -> &Background {
        self.bg
    }

    pub fn config(&self) -> &IntegratorConfig {
        &self.config
    }

    /// Last time the integrator will reach: `T - eps_T`, or infinity.
    pub fn stop_time(&self) -> f64 {
        let t = self.bg.horizon();
        if t.is_finite() {
            t - self.config.eps_t
        } else {
            t
        }
    }

    pub fn initial_state(&self) -> Result<FlowState> {
        FlowState::initial(self.bg)
    }

    pub fn proposed_dt(&self, state: &FlowState) -> f64 {
        self.config
            .fixed_dt
            .unwrap_or_else(|| stable_dt(&state.g_tilde, self.config.sigma))
    }

    fn rk4(&self, state: &FlowState, dt: f64, t_new: f64) -> Result<FlowState> {
        let t = state.t;
        let u = &state.u;
        let k1 = &state.udot;
        let (k2, _) = rhs(self.bg, &u.lin_comb(1.0, k1, 0.5 * dt), t + 0.5 * dt)?;
        let (k3, _) = rhs(self.bg, &u.lin_comb(1.0, &k2, 0.5 * dt), t + 0.5 * dt)?;
        let (k4, _) = rhs(self.bg, &u.lin_comb(1.0, &k3, dt), t_new)?;
        let incr = k1
            .lin_comb(1.0, &k2, 2.0)
            .lin_comb(1.0, &k3, 2.0)
            .lin_comb(1.0, &k4, 1.0);
        let u_new = u.lin_comb(1.0, &incr, dt / 6.0);
        u_new.check_finite()?;
        let (udot, g_tilde) = rhs(self.bg, &u_new, t_new)?;
        Ok(FlowState {
            t: t_new,
            u: u_new,
            udot,
            g_tilde,
            step_count: state.step_count + 1,
            dt_current: dt,
        })
    }

    /// One step of at most `dt_max`, landing exactly on `target` when it is
    /// within reach; the step is halved on loss of positivity or non-finite
    /// values.
    fn step_towards(&self, state: &FlowState, target: f64) -> Result<FlowState> {
        let mut dt = self.proposed_dt(state);
        let mut last_err = None;
        for halvings in 0..=self.config.max_halvings {
            let (h, t_new) = if state.t + dt >= target {
                (target - state.t, target)
            } else {
                (dt, state.t + dt)
            };
            match self.rk4(state, h, t_new) {
                Ok(next) => return Ok(next),
                Err(e @ (Error::KahlerLost { .. } | Error::DataCorruption { .. })) => {
                    last_err = Some((halvings, e));
                    dt = 0.5 * h;
                }
                Err(e) => return Err(e),
            }
        }
        let (halvings, e) = last_err.expect("at least one attempt");
        Err(Error::StepFailure {
            t: state.t,
            halvings,
            reason: e.to_string(),
        })
    }

    /// One step with the rule-chosen `dt`, clipped to the stop time.
    pub fn step(&self, state: &FlowState) -> Result<FlowState> {
        let stop = self.stop_time();
        if state.t >= stop {
            return Err(Error::HorizonReached { t: state.t, stop });
        }
        self.step_towards(state, stop)
    }

    /// Integrates to exactly `target`.
    pub fn advance_to(&self, state: FlowState, target: f64) -> Result<FlowState> {
        if target > self.stop_time() {
            return Err(Error::Horizon {
                t: target,
                horizon: self.bg.horizon(),
            });
        }
        let mut s = state;
        while s.t < target {
            s = self.step_towards(&s, target)?;
        }
        Ok(s)
    }

    /// Integrates from `u = 0` through `schedule` (increasing, starting at or
    /// after 0), calling `observer` on each snapshot. Scheduled times past
    /// the stop time are replaced by one final snapshot at the stop time.
    pub fn run(
        &self,
        schedule: &[f64],
        mut observer: impl FnMut(&Snapshot) -> Result<()>,
    ) -> std::result::Result<RunOutcome, RunFailure> {
        let start = self.initial_state().map_err(|error| RunFailure {
            error,
            last_good: Box::new(FlowState {
                t: 0.0,
                u: ScalarField::zeros(self.bg.spec()),
                udot: ScalarField::zeros(self.bg.spec()),
                g_tilde: self.bg.omega0().clone(),
                step_count: 0,
                dt_current: 0.0,
            }),
        })?;
        let mut state = start;
        let mut count = 0;
        let stop = self.stop_time();
        let fail = |error: Error, last: &FlowState| RunFailure {
            error,
            last_good: Box::new(last.clone()),
        };
        if let Some(w) = schedule.windows(2).find(|w| !(w[1] > w[0])) {
            return Err(fail(
                Error::Scenario(format!("schedule must be increasing, got {} then {}", w[0], w[1])),
                &state,
            ));
        }
        if schedule.first().is_some_and(|&t| !(t >= 0.0)) {
            return Err(fail(Error::Scenario("schedule must start at t >= 0".into()), &state));
        }
        let mut termination = Termination::Completed;
        for &requested in schedule {
            let (target, at_stop) = if requested >= stop {
                (stop, true)
            } else {
                (requested, false)
            };
            let (snap, resume) = self.snapshot_at(state, target).map_err(|(e, s)| fail(e, &s))?;
            observer(&snap).map_err(|e| fail(e, &snap.state))?;
            count += 1;
            state = resume;
            if at_stop {
                termination = Termination::HorizonReached { t: target };
                break;
            }
        }
        Ok(RunOutcome {
            final_state: state,
            snapshots: count,
            termination,
        })
    }

    /// Integrates to `target` through its stencil; on error returns the last
    /// accepted state alongside.
    fn snapshot_at(
        &self,
        state: FlowState,
        target: f64,
    ) -> std::result::Result<(Snapshot, FlowState), (Error, FlowState)> {
        let stop = self.stop_time();
        let room_before = target - state.t;
        let room_after = stop - target;
        if target == 0.0 || room_before <= 0.0 || room_after <= 0.0 {
            let s = self.advance_to(state.clone(), target).map_err(|e| (e, state))?;
            let snap = Snapshot {
                state: s.clone(),
                stencil: None,
            };
            return Ok((snap, s));
        }
        let h = self
            .proposed_dt(&state)
            .min(room_before / 3.0)
            .min(room_after / 2.0);
        let times = [target - 2.0 * h, target - h, target, target + h, target + 2.0 * h];
        let mut states = Vec::with_capacity(5);
        let mut cur = state;
        for &t in &times {
            cur = match self.advance_to(cur.clone(), t) {
                Ok(s) => s,
                Err(e) => return Err((e, cur)),
            };
            states.push(cur.clone());
        }
        let mut it = states.into_iter();
        let (a, b, c, d, e) = (
            it.next().unwrap(),
            it.next().unwrap(),
            it.next().unwrap(),
            it.next().unwrap(),
            it.next().unwrap(),
        );
        let center = c;
        let stencil = Stencil {
            h,
            u: [a.u, b.u, d.u, e.u.clone()],
            udot: [a.udot, b.udot, d.udot, e.udot.clone()],
        };
        let snap = Snapshot {
            state: center,
            stencil: Some(stencil),
        };
        Ok((snap, e))
    }
}
