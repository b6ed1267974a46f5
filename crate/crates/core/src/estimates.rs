//! Monitors: every evolution identity of the flow as a pointwise residual and
//! every maximum-principle estimate as a certificate with an explicit
//! constant, evaluated snapshot by snapshot.
//!
//! Time derivatives are analytic where the flow provides them (`d^2u/dt^2`,
//! the metric velocity). The residuals that exist to test those formulas use
//! the snapshot stencil instead: the curvature identity with `d/dt(udot + u)`,
//! the first-derivative equation, `d/dt log phi`, and `d/dt Lap v`.

use std::collections::BTreeMap;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::background::{Background, CertificateConstants, ReferenceMap};
use crate::error::{Error, Result, Witness};
use crate::flow::{second_time_derivative, FlowState, Snapshot};
use crate::grid::ScalarField;
use crate::hermitian::{
    covariant_hessians, metric_pairing, ricci_and_scalar, symmetric_norm_sq, trace_pair, wedge_ratio,
    HermitianField, HermitianMatrix,
};

/// `phi` below this is treated as degenerate by the Schwarz monitor.
pub const PHI_FLOOR: f64 = 1e-6;
/// The decay bound for `udot` is only asserted from this time on.
pub const UDOT_DECAY_START: f64 = 0.1;

// ---------------------------------------------------------------------------
// Fields

/// `1 - e^{t - T}` (exactly 1 when `T` is infinite).
pub fn v_factor(bg: &Background, t: f64) -> f64 {
    let horizon = bg.horizon();
    if horizon.is_finite() {
        1.0 - (t - horizon).exp()
    } else {
        1.0
    }
}

fn v_of(bg: &Background, t: f64, u: &ScalarField, udot: &ScalarField) -> ScalarField {
    let f = v_factor(bg, t);
    udot.zip_with(u, |d, u| f * d + u)
}

/// `v = (1 - e^{t - T}) udot + u`.
pub fn v_field(bg: &Background, state: &FlowState) -> ScalarField {
    v_of(bg, state.t, &state.u, &state.udot)
}

/// `dv/dt` from the analytic second derivative.
fn v_velocity(bg: &Background, state: &FlowState, uddot: &ScalarField) -> ScalarField {
    let f = v_factor(bg, state.t);
    let e = 1.0 - f;
    uddot.zip_with(&state.udot, |a, d| f * a + (1.0 - e) * d)
}

fn metric_at(bg: &Background, t: f64, u: &ScalarField) -> Result<HermitianField> {
    let hess = bg.grid().complex_hessian(u)?;
    Ok(bg.interpolate_background(t)?.lin_comb(1.0, &hess, 1.0))
}

fn stencil_derivative(
    snap: &Snapshot,
    f: impl Fn(f64, &ScalarField, &ScalarField) -> Result<ScalarField>,
) -> Result<ScalarField> {
    match &snap.stencil {
        Some(st) => st.derivative(snap.state.t, f),
        None => Err(Error::InsufficientData(format!(
            "no neighbouring states at t = {}",
            snap.state.t
        ))),
    }
}

fn sub(a: &ScalarField, b: &ScalarField) -> ScalarField {
    a.zip_with(b, |x, y| x - y)
}

/// Whether the reference form has a flat target (constant `omega_T`), or is
/// the pull-back under the base projection.
fn schwarz_applies(bg: &Background) -> bool {
    if bg.scenario().reference_map == ReferenceMap::BaseProjection {
        return true;
    }
    let r = bg.omega_ref();
    let first = r.at(0);
    (1..r.len()).all(|i| (r.at(i) - first).operator_norm() <= 1e-14 * (1.0 + first.operator_norm()))
}

// ---------------------------------------------------------------------------
// Identities

/// `d^2u/dt^2` (stencil) minus `Lap udot - e^{-t} tr(omega_0 - omega_inf) - udot`.
pub fn residual_first_tderiv(bg: &Background, snap: &Snapshot) -> Result<ScalarField> {
    let fd = stencil_derivative(snap, |_, _, udot| Ok(udot.clone()))?;
    Ok(sub(&fd, &second_time_derivative(bg, &snap.state)?))
}

/// `(d/dt - Lap) v - (-n + tr omega_T)`, with `dv/dt` analytic.
pub fn residual_v_evolution(bg: &Background, state: &FlowState) -> Result<ScalarField> {
    let uddot = second_time_derivative(bg, state)?;
    let v = v_field(bg, state);
    let lap = bg.grid().laplacian(&state.g_tilde, &v)?;
    let phi = trace_pair(&state.g_tilde, bg.omega_ref())?;
    let n = bg.n() as f64;
    let dv = v_velocity(bg, state, &uddot);
    Ok(dv
        .zip_with(&lap, |a, b| a - b)
        .zip_with(&phi, |a, p| a + n - p))
}

#[derive(Debug, Clone)]
pub struct CurvatureIdentities {
    pub ric_tw: HermitianField,
    pub r_tw: ScalarField,
    /// `R_tw - (e^{-t} tr(omega_0 - omega_inf) - Lap udot - n)`.
    pub residual1: ScalarField,
    /// `R_tw + n + d/dt(udot + u)` with the stencil derivative; `None` without
    /// a stencil.
    pub residual2: Option<ScalarField>,
}

pub fn scalar_curvature_identities(bg: &Background, snap: &Snapshot) -> Result<CurvatureIdentities> {
    let state = &snap.state;
    let g = &state.g_tilde;
    let (ric_tw, r_tw) = ricci_and_scalar(bg.grid(), g, bg.twist())?;
    let n = bg.n() as f64;
    let e = (-state.t).exp();
    let tr = trace_pair(g, bg.delta())?;
    let lap = bg.grid().laplacian(g, &state.udot)?;
    let expected = tr.zip_with(&lap, |tr, l| e * tr - l - n);
    let residual1 = sub(&r_tw, &expected);
    let residual2 = match stencil_derivative(snap, |_, u, udot| Ok(udot.lin_comb(1.0, u, 1.0))) {
        Ok(d) => Some(r_tw.zip_with(&d, |r, d| r + n + d)),
        Err(Error::InsufficientData(_)) => None,
        Err(e) => return Err(e),
    };
    Ok(CurvatureIdentities {
        ric_tw,
        r_tw,
        residual1,
        residual2,
    })
}

// ---------------------------------------------------------------------------
// Schwarz-type monitor

#[derive(Debug, Clone)]
pub struct SchwarzReport {
    /// `phi = tr_g(omega_T)`.
    pub phi: ScalarField,
    /// `(d/dt - Lap) log phi - 1` where `phi > PHI_FLOOR` (0 elsewhere);
    /// `None` without a stencil.
    pub log_phi_residual: Option<ScalarField>,
    /// Second-fundamental-form energy of the base projection.
    pub h: Option<ScalarField>,
    /// `(d/dt - Lap) phi - phi + H`.
    pub phi_heat_residual: Option<ScalarField>,
    /// `|grad phi|^2 / phi`, the sharp lower bound for `H`.
    pub grad_phi_over_phi: Option<ScalarField>,
}

fn phi_at(bg: &Background, t: f64, u: &ScalarField) -> Result<ScalarField> {
    trace_pair(&metric_at(bg, t, u)?, bg.omega_ref())
}

/// `H = a g^{i i'} g^{j j'} F_{ij} conj(F_{i'j'})` with
/// `F_{ij} = -Gamma^1_{ij} + delta_{i1} delta_{j1} d_1 log a`, `a = (omega_T)_{11}`:
/// the covariant Hessian of the projection onto the base with metric `a`.
fn projection_energy(bg: &Background, g: &HermitianField) -> Result<ScalarField> {
    let grid = bg.grid();
    let spec = g.spec();
    let gamma = crate::hermitian::christoffel(grid, g)?;
    let a = bg.omega_ref().map_scalar(|m| m.get(0, 0).re);
    let dlog_a = grid.holomorphic_gradient(&a.map(f64::ln))?;
    let values = (0..spec.len())
        .map(|p| {
            let mut f = [[Complex64::default(); 2]; 2];
            for i in 0..2 {
                for j in 0..2 {
                    f[i][j] = -gamma.get(p, 0, i, j);
                }
            }
            f[0][0] += dlog_a[0][p];
            a.values()[p] * symmetric_norm_sq(&g.at(p).inverse(), &f)
        })
        .collect();
    ScalarField::from_values(spec, values)
}

pub fn schwarz_monitor(bg: &Background, snap: &Snapshot) -> Result<SchwarzReport> {
    let state = &snap.state;
    let g = &state.g_tilde;
    let grid = bg.grid();
    let phi = trace_pair(g, bg.omega_ref())?;
    let log_phi = phi.map(|p| p.max(PHI_FLOOR).ln());
    let lap_log = grid.laplacian(g, &log_phi)?;
    let log_phi_residual = match stencil_derivative(snap, |t, u, _| {
        Ok(phi_at(bg, t, u)?.map(|p| p.max(PHI_FLOOR).ln()))
    }) {
        Ok(d) => {
            let r = d.zip_with(&lap_log, |d, l| d - l - 1.0);
            Some(r.zip_with(&phi, |r, p| if p > PHI_FLOOR { r } else { 0.0 }))
        }
        Err(Error::InsufficientData(_)) => None,
        Err(e) => return Err(e),
    };
    let (mut h, mut phi_heat_residual, mut grad_phi_over_phi) = (None, None, None);
    if bg.scenario().reference_map == ReferenceMap::BaseProjection {
        let hh = projection_energy(bg, g)?;
        let grad = grid.holomorphic_gradient(&phi)?;
        let ratio = (0..phi.len())
            .map(|p| {
                let w: Vec<Complex64> = grad.iter().map(|c| c[p]).collect();
                g.at(p).inverse().quad(&w) / phi.values()[p].max(PHI_FLOOR)
            })
            .collect();
        grad_phi_over_phi = Some(ScalarField::from_values(phi.spec(), ratio)?);
        if let Some(st) = &snap.stencil {
            let dphi = st.derivative(state.t, |t, u, _| phi_at(bg, t, u))?;
            let lap_phi = grid.laplacian(g, &phi)?;
            let r = dphi
                .zip_with(&lap_phi, |d, l| d - l)
                .zip_with(&phi, |a, p| a - p)
                .zip_with(&hh, |a, h| a + h);
            phi_heat_residual = Some(r);
        }
        h = Some(hh);
    }
    Ok(SchwarzReport {
        phi,
        log_phi_residual,
        h,
        phi_heat_residual,
        grad_phi_over_phi,
    })
}

#[derive(Debug, Clone)]
pub struct FiberwiseReport {
    /// `tr_g(omega_T) / 2 * (2 det g) / (omega_0 ^ omega_T)`.
    pub chain: ScalarField,
    /// `g_{22} / (omega_0)_{22}`.
    pub direct: ScalarField,
}

impl FiberwiseReport {
    pub fn discrepancy(&self) -> f64 {
        sub(&self.chain, &self.direct).sup_norm()
    }
}

/// Fiber volume ratio of the surface fibration, computed through the wedge
/// chain and by direct restriction.
pub fn fiberwise_ratio(bg: &Background, state: &FlowState) -> Result<FiberwiseReport> {
    if bg.n() != 2 {
        return Err(Error::UnsupportedDimension(bg.n()));
    }
    if bg.scenario().reference_map != ReferenceMap::BaseProjection {
        return Err(Error::Unsupported("fiberwise ratio needs a fibration scenario".into()));
    }
    let g = &state.g_tilde;
    let half_trace = wedge_ratio(g, bg.omega_ref())?;
    let spec = g.spec();
    let chain = (0..spec.len())
        .map(|p| {
            let gm = g.at(p);
            half_trace.values()[p] * 2.0 * gm.det() / bg.omega0().at(p).wedge_density(&bg.omega_ref().at(p))
        })
        .collect();
    let direct = (0..spec.len())
        .map(|p| g.at(p).get(1, 1).re / bg.omega0().at(p).get(1, 1).re)
        .collect();
    Ok(FiberwiseReport {
        chain: ScalarField::from_values(spec, chain)?,
        direct: ScalarField::from_values(spec, direct)?,
    })
}

// ---------------------------------------------------------------------------
// Gradient and Laplacian quantities

#[derive(Debug, Clone)]
pub struct GradientReport {
    /// `|grad v|^2 / (C_v - v)`.
    pub psi: ScalarField,
    pub grad_v_sq: ScalarField,
    /// `(d/dt - Lap)|grad v|^2 - (|grad v|^2 - |DDv|^2 - |DDbar v|^2 + 2 Re<grad phi, grad v>)`.
    pub identity_defect: ScalarField,
    /// `-B_inf(grad v, grad v)`, the exact value of the defect.
    pub twist_pairing: ScalarField,
}

fn check_denominator(v: &ScalarField, c_v: f64) -> Result<()> {
    let w = v.argmax();
    let gap = c_v - w.value;
    if !(gap >= 1.0) {
        return Err(Error::DenominatorTooSmall { index: w.index, gap });
    }
    Ok(())
}

pub fn gradient_monitor(bg: &Background, state: &FlowState, c_v: f64) -> Result<GradientReport> {
    let grid = bg.grid();
    let g = &state.g_tilde;
    let spec = g.spec();
    let n = bg.n();
    let v = v_field(bg, state);
    check_denominator(&v, c_v)?;
    let uddot = second_time_derivative(bg, state)?;
    let dv = v_velocity(bg, state, &uddot);
    let cov = covariant_hessians(grid, g, &v)?;
    let phi = trace_pair(g, bg.omega_ref())?;
    let grad_phi = grid.holomorphic_gradient(&phi)?;
    let grad_dv = grid.holomorphic_gradient(&dv)?;
    // metric velocity -e^{-t}(omega_0 - omega_inf) + i d dbar udot
    let e = (-state.t).exp();
    let g_dot = bg
        .delta()
        .lin_comb(-e, &grid.complex_hessian(&state.udot)?, 1.0);
    let twist = *bg.twist();
    let grad_sq = &cov.gradient_norm_sq;
    let lap_grad_sq = grid.laplacian(g, grad_sq)?;
    let mut dt_grad_sq = Vec::with_capacity(spec.len());
    let mut cross = Vec::with_capacity(spec.len());
    let mut twist_pairing = Vec::with_capacity(spec.len());
    for p in 0..spec.len() {
        let inv = g.at(p).inverse();
        let w = &cov.gradient[p][..n];
        let y = inv.apply(w);
        let wd: Vec<Complex64> = grad_dv.iter().map(|c| c[p]).collect();
        let wp: Vec<Complex64> = grad_phi.iter().map(|c| c[p]).collect();
        dt_grad_sq.push(2.0 * sesq(&inv, w, &wd).re - g_dot.at(p).quad(&y[..n]));
        cross.push(2.0 * sesq(&inv, w, &wp).re);
        twist_pairing.push(-twist.quad(&y[..n]));
    }
    let defect = (0..spec.len())
        .map(|p| {
            let lhs = dt_grad_sq[p] - lap_grad_sq.values()[p];
            let rhs = grad_sq.values()[p] - cov.h20_norm_sq.values()[p] - cov.h11_norm_sq.values()[p] + cross[p];
            lhs - rhs
        })
        .collect();
    let psi = grad_sq.zip_with(&v, |q, v| q / (c_v - v));
    Ok(GradientReport {
        psi,
        grad_v_sq: grad_sq.clone(),
        identity_defect: ScalarField::from_values(spec, defect)?,
        twist_pairing: ScalarField::from_values(spec, twist_pairing)?,
    })
}

/// `sum conj(a_i) M_{ij} b_j`.
fn sesq(m: &HermitianMatrix, a: &[Complex64], b: &[Complex64]) -> Complex64 {
    let mb = m.apply(b);
    a.iter().zip(mb.iter()).map(|(x, y)| x.conj() * y).sum()
}

#[derive(Debug, Clone)]
pub struct LaplacianReport {
    /// `(C_v - Lap v) / (C_v - v)`.
    pub phi_quotient: ScalarField,
    pub lap_v: ScalarField,
    /// `Lap v + R_tw + tr_g(omega_T)`.
    pub identity_residual: ScalarField,
    /// `(d/dt - Lap) Lap v - (Lap v + (Ric_tw, i d dbar v) + Lap phi)`; `None`
    /// without a stencil.
    pub residual: Option<ScalarField>,
    /// `|DDbar v|^2 - (Lap v)^2 / n`.
    pub cauchy_schwarz_gap: ScalarField,
    pub r_tw: ScalarField,
}

pub fn laplacian_monitor(bg: &Background, snap: &Snapshot, c_v: f64) -> Result<LaplacianReport> {
    if bg.horizon().is_finite() {
        return Err(Error::Unsupported(
            "the Laplacian quantity is only monitored for infinite-time flows".into(),
        ));
    }
    let state = &snap.state;
    let grid = bg.grid();
    let g = &state.g_tilde;
    let n = bg.n() as f64;
    let v = v_field(bg, state);
    check_denominator(&v, c_v)?;
    let hess_v = grid.complex_hessian(&v)?;
    let lap_v = trace_pair(g, &hess_v)?;
    let (ric_tw, r_tw) = ricci_and_scalar(grid, g, bg.twist())?;
    let phi = trace_pair(g, bg.omega_ref())?;
    let identity_residual = lap_v.zip_with(&r_tw, |l, r| l + r).zip_with(&phi, |a, p| a + p);
    let h11_sq = metric_pairing(g, &hess_v, &hess_v)?;
    let cauchy_schwarz_gap = h11_sq.zip_with(&lap_v, |h, l| h - l * l / n);
    let residual = match &snap.stencil {
        Some(st) => {
            let d = st.derivative(state.t, |t, u, udot| {
                let gt = metric_at(bg, t, u)?;
                grid.laplacian(&gt, &v_of(bg, t, u, udot))
            })?;
            let lap_lap = grid.laplacian(g, &lap_v)?;
            let ric_pair = metric_pairing(g, &ric_tw, &hess_v)?;
            let lap_phi = grid.laplacian(g, &phi)?;
            let r = d
                .zip_with(&lap_lap, |a, b| a - b)
                .zip_with(&lap_v, |a, b| a - b)
                .zip_with(&ric_pair, |a, b| a - b)
                .zip_with(&lap_phi, |a, b| a - b);
            Some(r)
        }
        None => None,
    };
    let phi_quotient = lap_v.zip_with(&v, |l, v| (c_v - l) / (c_v - v));
    Ok(LaplacianReport {
        phi_quotient,
        lap_v,
        identity_residual,
        residual,
        cauchy_schwarz_gap,
        r_tw,
    })
}

// ---------------------------------------------------------------------------
// Certificates

/// Outcome of one certificate evaluation: `margin >= 0` iff it passes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub name: String,
    pub t: f64,
    pub passed: bool,
    pub margin: f64,
    pub witness: Option<Witness>,
}

impl Certificate {
    fn new(name: &str, t: f64, margin: f64, witness: Option<Witness>) -> Self {
        Self {
            name: name.into(),
            t,
            passed: margin >= 0.0,
            margin,
            witness,
        }
    }
}

/// `max u <= C_u + 1e-6`.
pub fn certificate_u_upper(state: &FlowState, c_u: f64, tol: f64) -> Certificate {
    let w = state.u.argmax();
    Certificate::new("u_upper", state.t, c_u + tol - w.value, Some(w))
}

/// `max udot <= (n t + C_u) / (e^t - 1) + 1e-6`, for `t >= 0.1`.
pub fn certificate_udot_decay(bg: &Background, state: &FlowState, c_u: f64, tol: f64) -> Option<Certificate> {
    let t = state.t;
    if t < UDOT_DECAY_START {
        return None;
    }
    let bound = (bg.n() as f64 * t + c_u) / t.exp_m1() + tol;
    let w = state.udot.argmax();
    Some(Certificate::new("udot_decay", t, bound - w.value, Some(w)))
}

/// `m(t) = max e^t (d^2u/dt^2 + du/dt)`, whose monotonicity is the volume decay.
pub fn volume_decay_quantity(bg: &Background, state: &FlowState) -> Result<Witness> {
    let uddot = second_time_derivative(bg, state)?;
    let e = state.t.exp();
    Ok(uddot.zip_with(&state.udot, |a, d| e * (a + d)).argmax())
}

/// Checks `m` non-increasing along `series` of `(t, m)` within
/// `slack (1 + |m|)`.
pub fn certificate_volume_decay(series: &[(f64, Witness)], slack: f64) -> Vec<Certificate> {
    series
        .windows(2)
        .map(|w| {
            let (prev, cur) = (w[0].1.value, w[1].1.value);
            let margin = prev + slack * (1.0 + prev.abs()) - cur;
            Certificate::new("volume_decay", w[1].0, margin, Some(w[1].1))
        })
        .collect()
}

/// Per-snapshot extrema used by the finite-time certificates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FiniteTimeSample {
    pub t: f64,
    pub factor: f64,
    pub v_min: Witness,
    pub v_max: Witness,
    pub udot_min: Witness,
}

pub fn finite_time_sample(bg: &Background, state: &FlowState) -> FiniteTimeSample {
    let v = v_field(bg, state);
    FiniteTimeSample {
        t: state.t,
        factor: v_factor(bg, state.t),
        v_min: v.argmin(),
        v_max: v.argmax(),
        udot_min: state.udot.argmin(),
    }
}

/// `C_early = sup_{t <= 0.2 T} |v| + 0.5`.
pub fn c_early(samples: &[FiniteTimeSample], horizon: f64) -> Option<f64> {
    let early: Vec<_> = samples.iter().filter(|s| s.t <= 0.2 * horizon).collect();
    if early.is_empty() {
        return None;
    }
    Some(
        early
            .iter()
            .map(|s| s.v_min.value.abs().max(s.v_max.value.abs()))
            .fold(0.0, f64::max)
            + 0.5,
    )
}

/// Lower and two-sided bounds on `v` and the lower bound on `udot` after the
/// early window.
pub fn finite_time_certificates(
    samples: &[FiniteTimeSample],
    horizon: f64,
    c_early: f64,
    slack: f64,
    udot_tol: f64,
) -> Vec<Certificate> {
    let mut out = Vec::new();
    for s in samples.iter().filter(|s| s.t > 0.2 * horizon) {
        out.push(Certificate::new(
            "finite_time.v_lower",
            s.t,
            s.v_min.value + c_early,
            Some(s.v_min),
        ));
        let (abs_w, abs_v) = if s.v_max.value.abs() >= s.v_min.value.abs() {
            (s.v_max, s.v_max.value.abs())
        } else {
            (s.v_min, s.v_min.value.abs())
        };
        out.push(Certificate::new(
            "finite_time.v_abs",
            s.t,
            c_early * (1.0 + slack) - abs_v,
            Some(abs_w),
        ));
        let bound = -c_early / s.factor - udot_tol;
        out.push(Certificate::new(
            "finite_time.udot_lower",
            s.t,
            s.udot_min.value - bound,
            Some(s.udot_min),
        ));
    }
    out
}

/// `max over [t_end/2, t_end]` of `|x(t) - x(t_end/2)|` against `rel |x(t_end/2)|`.
pub fn plateau(name: &str, series: &[(f64, f64)], rel: f64) -> Option<Certificate> {
    let t_end = series.last()?.0;
    let window: Vec<_> = series.iter().filter(|(t, _)| *t >= 0.5 * t_end - 1e-12).collect();
    if window.len() < 2 {
        return None;
    }
    let base = window[0].1;
    let allowed = rel * base.abs() + 1e-12;
    let worst = window
        .iter()
        .map(|(t, x)| (*t, (x - base).abs()))
        .fold((window[0].0, 0.0), |a, b| if b.1 > a.1 { b } else { a });
    Some(Certificate::new(name, worst.0, allowed - worst.1, None))
}

// ---------------------------------------------------------------------------
// The suite

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    /// Residual sup-norms of the evolution identities, relative to `1 + scale`.
    pub residual: f64,
    pub u_upper: f64,
    pub udot_decay: f64,
    pub volume_slack: f64,
    pub schwarz: f64,
    pub fiber_chain: f64,
    pub gradient: f64,
    pub laplacian: f64,
    pub laplacian_identity: f64,
    pub cauchy_schwarz: f64,
    pub plateau: f64,
    pub finite_time_slack: f64,
    pub finite_time_udot: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            residual: 1e-4,
            u_upper: 1e-6,
            udot_decay: 1e-6,
            volume_slack: 1e-6,
            schwarz: 1e-4,
            fiber_chain: 1e-8,
            gradient: 1e-6,
            laplacian: 1e-5,
            laplacian_identity: 1e-8,
            cauchy_schwarz: 1e-10,
            plateau: 0.05,
            finite_time_slack: 0.2,
            finite_time_udot: 1e-4,
        }
    }
}

/// Which monitor groups run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MonitorSelection {
    pub residuals: bool,
    pub max_principle: bool,
    pub schwarz: bool,
    pub gradient: bool,
    pub laplacian: bool,
    pub finite_time: bool,
    /// Boundedness as plateaus over the second half of the run; only
    /// meaningful once the flow has settled, so off unless asked for.
    pub plateau: bool,
}

impl Default for MonitorSelection {
    fn default() -> Self {
        Self {
            residuals: true,
            max_principle: true,
            schwarz: true,
            gradient: true,
            laplacian: true,
            finite_time: true,
            plateau: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MonitorConfig {
    /// `None` computes `C_u` from the background.
    pub c_u: Option<f64>,
    pub c_v: f64,
    /// `None` derives `C_early` from the run.
    pub c_early: Option<f64>,
    pub tolerances: Tolerances,
    pub selection: MonitorSelection,
}

impl Default for MonitorConfig {
    fn default() -> Self {
        Self {
            c_u: None,
            c_v: CertificateConstants::DEFAULT_C_V,
            c_early: None,
            tolerances: Tolerances::default(),
            selection: MonitorSelection::default(),
        }
    }
}

/// One row of diagnostics per snapshot; `None` marks a monitor that did not
/// apply or lacked data.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SnapshotRow {
    pub t: f64,
    pub sup_u: f64,
    pub sup_udot: f64,
    pub sup_v: f64,
    pub min_v: f64,
    pub sup_phi: Option<f64>,
    pub sup_psi: Option<f64>,
    pub sup_neg_lap_v: Option<f64>,
    pub sup_r_tw: Option<f64>,
    pub min_r_tw: Option<f64>,
    pub min_eig_g: f64,
    pub res_first_tderiv: Option<f64>,
    pub res_v_evolution: Option<f64>,
    pub res_curvature: Option<f64>,
    pub res_twisted_scalar: Option<f64>,
    pub res_gradient: Option<f64>,
    pub res_laplacian: Option<f64>,
    pub res_laplacian_identity: Option<f64>,
    pub res_fiber_chain: Option<f64>,
    pub max_log_phi_excess: Option<f64>,
    pub volume_m: Option<f64>,
    pub spectral_tail: f64,
    pub dt: f64,
}

/// Aggregate of one certificate over a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateSummary {
    pub name: String,
    pub passed: bool,
    pub evaluations: usize,
    pub skipped: usize,
    /// Smallest margin seen, with where and when.
    pub worst_margin: Option<f64>,
    pub worst_t: Option<f64>,
    pub witness: Option<Witness>,
}

impl CertificateSummary {
    fn new(name: &str) -> Self {
        Self {
            name: name.into(),
            passed: true,
            evaluations: 0,
            skipped: 0,
            worst_margin: None,
            worst_t: None,
            witness: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitorReport {
    pub constants: CertificateConstants,
    pub rows: Vec<SnapshotRow>,
    pub certificates: Vec<CertificateSummary>,
    /// How each monitor obtained its time derivatives.
    pub derivative_paths: BTreeMap<String, String>,
    pub warnings: Vec<String>,
}

impl MonitorReport {
    pub fn all_passed(&self) -> bool {
        self.certificates.iter().all(|c| c.passed)
    }

    pub fn certificate(&self, name: &str) -> Option<&CertificateSummary> {
        self.certificates.iter().find(|c| c.name == name)
    }

    /// The named column as `(t, value)` pairs, skipping missing values.
    pub fn series(&self, column: impl Fn(&SnapshotRow) -> Option<f64>) -> Vec<(f64, f64)> {
        self.rows
            .iter()
            .filter_map(|r| column(r).map(|x| (r.t, x)))
            .collect()
    }
}

/// Evaluates the monitors on each snapshot and accumulates the report.
#[derive(Debug)]
pub struct MonitorSuite<'a> {
    bg: &'a Background,
    config: MonitorConfig,
    constants: CertificateConstants,
    rows: Vec<SnapshotRow>,
    certs: BTreeMap<String, CertificateSummary>,
    volume: Vec<(f64, Witness)>,
    finite: Vec<FiniteTimeSample>,
    warnings: Vec<String>,
    tail_warned: bool,
}

const TAIL_WARNING: f64 = 1e-8;

impl<'a> MonitorSuite<'a> {
    pub fn new(bg: &'a Background, config: MonitorConfig) -> Result<Self> {
        let c_u = match config.c_u {
            Some(c) => c,
            None => bg.compute_c_u()?,
        };
        Ok(Self {
            bg,
            config,
            constants: CertificateConstants { c_u, c_v: config.c_v },
            rows: Vec::new(),
            certs: BTreeMap::new(),
            volume: Vec::new(),
            finite: Vec::new(),
            warnings: Vec::new(),
            tail_warned: false,
        })
    }

    pub fn constants(&self) -> CertificateConstants {
        self.constants
    }

    pub fn rows(&self) -> &[SnapshotRow] {
        &self.rows
    }

    fn record(&mut self, c: Certificate) {
        let entry = self
            .certs
            .entry(c.name.clone())
            .or_insert_with(|| CertificateSummary::new(&c.name));
        entry.evaluations += 1;
        entry.passed &= c.passed;
        if entry.worst_margin.is_none_or(|m| c.margin < m) || c.margin.is_nan() {
            entry.worst_margin = Some(c.margin);
            entry.worst_t = Some(c.t);
            entry.witness = c.witness;
        }
        if c.margin.is_nan() {
            entry.passed = false;
        }
    }

    fn skip(&mut self, name: &str) {
        self.certs
            .entry(name.into())
            .or_insert_with(|| CertificateSummary::new(name))
            .skipped += 1;
    }

    /// Records `sup |r| <= tol (1 + scale)`.
    fn bound_residual(&mut self, name: &str, t: f64, r: &ScalarField, tol: f64, scale: f64) {
        let w = r.map(f64::abs).argmax();
        self.record(Certificate::new(name, t, tol * (1.0 + scale) - w.value, Some(w)));
    }

    /// Records `max (r - tol (1 + |s|)) <= 0` pointwise.
    fn bound_pointwise(&mut self, name: &str, t: f64, r: &ScalarField, s: &ScalarField, tol: f64) {
        let excess = r.zip_with(s, |r, s| r - tol * (1.0 + s.abs()));
        let w = excess.argmax();
        self.record(Certificate::new(name, t, -w.value, Some(w)));
    }

    pub fn observe(&mut self, snap: &Snapshot) -> Result<()> {
        let bg = self.bg;
        let state = &snap.state;
        let t = state.t;
        let tol = self.config.tolerances;
        let sel = self.config.selection;
        let v = v_field(bg, state);
        let mut row = SnapshotRow {
            t,
            sup_u: state.u.max(),
            sup_udot: state.udot.max(),
            sup_v: v.max(),
            min_v: v.min(),
            min_eig_g: state.g_tilde.min_eigenvalue().value,
            spectral_tail: bg.grid().spectral_tail_fraction(&state.u)?,
            dt: state.dt_current,
            ..Default::default()
        };
        if row.spectral_tail > TAIL_WARNING && !self.tail_warned {
            self.tail_warned = true;
            self.warnings.push(format!(
                "resolution: spectral tail fraction of u is {:.3e} at t = {t}",
                row.spectral_tail
            ));
        }
        let finite = bg.horizon().is_finite();

        if sel.max_principle {
            let c_u = self.constants.c_u;
            self.record(certificate_u_upper(state, c_u, tol.u_upper));
            match certificate_udot_decay(bg, state, c_u, tol.udot_decay) {
                Some(c) => self.record(c),
                None => self.skip("udot_decay"),
            }
            let m = volume_decay_quantity(bg, state)?;
            row.volume_m = Some(m.value);
            self.volume.push((t, m));
            let n = self.volume.len();
            if n >= 2 {
                for c in certificate_volume_decay(&self.volume[n - 2..], tol.volume_slack) {
                    self.record(c);
                }
            }
        }

        if sel.residuals {
            let uddot = second_time_derivative(bg, state)?;
            match residual_first_tderiv(bg, snap) {
                Ok(r) => {
                    row.res_first_tderiv = Some(r.sup_norm());
                    self.bound_residual("identity.first_tderiv", t, &r, tol.residual, uddot.sup_norm());
                }
                Err(Error::InsufficientData(_)) => self.skip("identity.first_tderiv"),
                Err(e) => return Err(e),
            }
            let r = residual_v_evolution(bg, state)?;
            row.res_v_evolution = Some(r.sup_norm());
            self.bound_residual("identity.v_evolution", t, &r, tol.residual, bg.n() as f64);
            let ci = scalar_curvature_identities(bg, snap)?;
            row.sup_r_tw = Some(ci.r_tw.max());
            row.min_r_tw = Some(ci.r_tw.min());
            let scale = ci.r_tw.sup_norm();
            row.res_curvature = Some(ci.residual1.sup_norm());
            self.bound_residual("identity.curvature", t, &ci.residual1, tol.residual, scale);
            match &ci.residual2 {
                Some(r2) => {
                    row.res_twisted_scalar = Some(r2.sup_norm());
                    self.bound_residual("identity.twisted_scalar", t, r2, tol.residual, scale);
                }
                None => self.skip("identity.twisted_scalar"),
            }
        }

        if sel.schwarz {
            let s = schwarz_monitor(bg, snap)?;
            row.sup_phi = Some(s.phi.max());
            if schwarz_applies(bg) {
                match &s.log_phi_residual {
                    Some(r) => {
                        let w = r.argmax();
                        row.max_log_phi_excess = Some(w.value);
                        self.record(Certificate::new("schwarz.log_phi", t, tol.schwarz - w.value, Some(w)));
                    }
                    None => self.skip("schwarz.log_phi"),
                }
            }
            if let Some(r) = &s.phi_heat_residual {
                self.bound_pointwise("schwarz.phi_heat", t, r, &s.phi, tol.schwarz);
            } else if s.h.is_some() {
                self.skip("schwarz.phi_heat");
            }
            if bg.scenario().reference_map == ReferenceMap::BaseProjection {
                let f = fiberwise_ratio(bg, state)?;
                let d = f.discrepancy();
                row.res_fiber_chain = Some(d);
                self.record(Certificate::new("fiber.chain", t, tol.fiber_chain - d, None));
            }
        }

        if sel.gradient {
            match gradient_monitor(bg, state, self.constants.c_v) {
                Ok(gr) => {
                    row.sup_psi = Some(gr.psi.max());
                    let diff = sub(&gr.identity_defect, &gr.twist_pairing)
                        .zip_with(&gr.grad_v_sq, |d, q| d / (1.0 + q));
                    let w = diff.map(f64::abs).argmax();
                    row.res_gradient = Some(w.value);
                    self.record(Certificate::new("gradient.defect", t, tol.gradient - w.value, Some(w)));
                    if bg.twist().min_eigenvalue() >= 0.0 {
                        self.bound_pointwise(
                            "gradient.defect_sign",
                            t,
                            &gr.identity_defect,
                            &gr.grad_v_sq,
                            tol.gradient,
                        );
                    }
                    self.record(Certificate::new(
                        "gradient.c_v",
                        t,
                        self.constants.c_v - v.max() - 1.0,
                        Some(v.argmax()),
                    ));
                }
                Err(Error::DenominatorTooSmall { index, gap }) => {
                    self.warnings.push(format!(
                        "C_v - v = {gap} < 1 at grid point {index}, t = {t}: raise c_v"
                    ));
                    self.record(Certificate::new(
                        "gradient.c_v",
                        t,
                        gap - 1.0,
                        Some(Witness { index, value: gap }),
                    ));
                }
                Err(e) => return Err(e),
            }
        }

        if sel.laplacian && !finite {
            match laplacian_monitor(bg, snap, self.constants.c_v) {
                Ok(lr) => {
                    row.sup_neg_lap_v = Some(-lr.lap_v.min());
                    let scale = lr.lap_v.sup_norm();
                    row.res_laplacian_identity = Some(lr.identity_residual.sup_norm());
                    self.bound_residual(
                        "laplacian.identity",
                        t,
                        &lr.identity_residual,
                        tol.laplacian_identity,
                        scale,
                    );
                    match &lr.residual {
                        Some(r) => {
                            let rel = r.zip_with(&lr.lap_v, |r, l| r.abs() / (1.0 + l.abs()));
                            let w = rel.argmax();
                            row.res_laplacian = Some(r.sup_norm());
                            self.record(Certificate::new("laplacian.residual", t, tol.laplacian - w.value, Some(w)));
                        }
                        None => self.skip("laplacian.residual"),
                    }
                    let gap = lr.cauchy_schwarz_gap.argmin();
                    self.record(Certificate::new(
                        "laplacian.cauchy_schwarz",
                        t,
                        gap.value + tol.cauchy_schwarz * (1.0 + scale * scale),
                        Some(gap),
                    ));
                }
                Err(Error::DenominatorTooSmall { .. }) => self.skip("laplacian.residual"),
                Err(e) => return Err(e),
            }
        }

        if sel.finite_time && finite {
            self.finite.push(finite_time_sample(bg, state));
        }

        self.rows.push(row);
        Ok(())
    }

    pub fn finish(mut self) -> MonitorReport {
        let tol = self.config.tolerances;
        let sel = self.config.selection;
        let horizon = self.bg.horizon();
        if sel.finite_time && horizon.is_finite() {
            match self.config.c_early.or_else(|| c_early(&self.finite, horizon)) {
                Some(c) => {
                    let certs = finite_time_certificates(
                        &self.finite,
                        horizon,
                        c,
                        tol.finite_time_slack,
                        tol.finite_time_udot,
                    );
                    if certs.is_empty() {
                        self.skip("finite_time.v_lower");
                    }
                    for c in certs {
                        self.record(c);
                    }
                }
                None => {
                    self.warnings
                        .push("finite-time certificates need a snapshot with t <= 0.2 T".into());
                    self.skip("finite_time.v_lower");
                }
            }
        }
        if sel.plateau {
            let rows = std::mem::take(&mut self.rows);
            let columns: [(&str, fn(&SnapshotRow) -> Option<f64>); 5] = [
                ("plateau.sup_phi", |r| r.sup_phi),
                ("plateau.sup_psi", |r| r.sup_psi),
                ("plateau.sup_neg_lap_v", |r| r.sup_neg_lap_v),
                ("plateau.sup_r_tw", |r| r.sup_r_tw),
                ("plateau.sup_abs_v", |r| Some(r.sup_v.abs().max(r.min_v.abs()))),
            ];
            for (name, col) in columns {
                let series: Vec<(f64, f64)> = rows.iter().filter_map(|r| col(r).map(|x| (r.t, x))).collect();
                match plateau(name, &series, tol.plateau) {
                    Some(c) => self.record(c),
                    None => self.skip(name),
                }
            }
            // the twisted Einstein limit has R_tw = -n when the twist is ample
            if !horizon.is_finite() && self.bg.twist().min_eigenvalue() > 0.0 {
                if let Some(last) = rows.iter().rev().find_map(|r| r.sup_r_tw.zip(r.min_r_tw).map(|x| (r.t, x))) {
                    let n = self.bg.n() as f64;
                    let (t, (hi, lo)) = last;
                    let dev = (hi + n).abs().max((lo + n).abs());
                    self.record(Certificate::new("plateau.r_tw_limit", t, tol.plateau * n - dev, None));
                }
            }
            self.rows = rows;
        }
        let mut paths = BTreeMap::new();
        for (k, v) in [
            ("identity.first_tderiv", "stencil"),
            ("identity.v_evolution", "analytic"),
            ("identity.twisted_scalar", "stencil"),
            ("schwarz.log_phi", "stencil"),
            ("schwarz.phi_heat", "stencil"),
            ("gradient.defect", "analytic"),
            ("laplacian.residual", "stencil"),
            ("volume_decay", "analytic"),
        ] {
            paths.insert(k.to_string(), v.to_string());
        }
        MonitorReport {
            constants: self.constants,
            rows: self.rows,
            certificates: self.certs.into_values().collect(),
            derivative_paths: paths,
            warnings: self.warnings,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::background::Scenario;
    use crate::flow::{Integrator, IntegratorConfig};

    fn run(s: Scenario, points: usize, schedule: &[f64], config: MonitorConfig) -> MonitorReport {
        let bg = Background::new(s, points).unwrap();
        let it = Integrator::new(&bg, IntegratorConfig::default()).unwrap();
        let mut suite = MonitorSuite::new(&bg, config).unwrap();
        it.run(schedule, |snap| suite.observe(snap)).unwrap();
        suite.finish()
    }

    fn assert_passed(report: &MonitorReport) {
        for c in &report.certificates {
            assert!(c.passed, "{c:?}");
        }
    }

    #[test]
    fn fixed_point_has_zero_residuals() {
        let r = run(Scenario::ke_fixed_point(2), 8, &[0.0, 0.5, 1.0], MonitorConfig::default());
        assert_passed(&r);
        for row in &r.rows {
            assert!(row.res_v_evolution.unwrap() < 1e-12);
            assert!(row.res_curvature.unwrap() < 1e-12);
            assert!((row.sup_r_tw.unwrap() + 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn generic_surface_certificates_hold() {
        let r = run(Scenario::generic_ample(1, 3), 16, &[0.0, 0.2, 0.6, 1.5], MonitorConfig::default());
        assert_passed(&r);
        let names: Vec<_> = r.certificates.iter().map(|c| c.name.as_str()).collect();
        for n in ["identity.twisted_scalar", "gradient.defect", "laplacian.residual", "volume_decay"] {
            assert!(names.contains(&n), "{n} missing from {names:?}");
        }
        // t = 0 has no stencil
        assert!(r.certificate("identity.first_tderiv").unwrap().skipped >= 1);
    }

    #[test]
    fn fibration_monitors() {
        let r = run(Scenario::fibration(5), 16, &[0.0, 0.3, 1.0], MonitorConfig::default());
        assert_passed(&r);
        assert!(r.certificate("fiber.chain").unwrap().evaluations == 3);
        assert!(r.certificate("schwarz.phi_heat").unwrap().evaluations >= 2);
    }

    #[test]
    fn finite_time_bounds() {
        let s = Scenario::finite_time(1, 1.0, 7).unwrap();
        let r = run(s, 32, &[0.0, 0.1, 0.2, 0.5, 0.9, 0.99], MonitorConfig::default());
        assert_passed(&r);
        assert!(r.certificate("finite_time.v_lower").unwrap().evaluations >= 3);
        assert!(r.certificate("laplacian.residual").is_none());
    }

    #[test]
    fn small_c_v_is_a_failed_certificate() {
        let config = MonitorConfig {
            c_v: -5.0,
            ..Default::default()
        };
        let r = run(Scenario::generic_ample(1, 3), 16, &[0.0], config);
        assert!(!r.certificate("gradient.c_v").unwrap().passed);
        assert!(!r.warnings.is_empty());
    }

    #[test]
    fn volume_decay_detects_increase() {
        let w = |v| Witness { index: 0, value: v };
        let ok = certificate_volume_decay(&[(0.0, w(1.0)), (1.0, w(0.5))], 1e-6);
        assert!(ok[0].passed);
        let bad = certificate_volume_decay(&[(0.0, w(1.0)), (1.0, w(1.1))], 1e-6);
        assert!(!bad[0].passed);
    }

    #[test]
    fn plateau_examples() {
        let flat = [(0.0, 5.0), (1.0, 2.0), (2.0, 2.01), (4.0, 2.05)];
        assert!(plateau("x", &flat, 0.05).unwrap().passed);
        let growing = [(0.0, 1.0), (2.0, 2.0), (4.0, 3.0)];
        assert!(!plateau("x", &growing, 0.05).unwrap().passed);
        assert!(plateau("x", &[(1.0, 1.0)], 0.05).is_none());
    }

    #[test]
    fn v_factor_examples() {
        let bg = Background::new(Scenario::finite_time(1, 2.0, 1).unwrap(), 8).unwrap();
        assert!((v_factor(&bg, 0.0) - (1.0 - (-2f64).exp())).abs() < 1e-15);
        assert!(v_factor(&bg, 2.0).abs() < 1e-15);
        let bg = Background::new(Scenario::ke_fixed_point(1), 8).unwrap();
        assert_eq!(v_factor(&bg, 100.0), 1.0);
    }
}
