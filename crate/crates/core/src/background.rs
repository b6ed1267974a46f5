//! Background data of a flow: the forms `omega_0`, `omega_inf`, the volume
//! density `Omega`, the interpolation `omega_t`, and the scenario catalog.
//!
//! Every form is a constant Hermitian matrix plus `i d dbar` of a periodic
//! potential, `omega_0 = B0 + i d dbar psi_0` and `omega_inf = B_inf + i d dbar psi_inf`.
//! Because `B_inf` is not exact on the torus, `omega_inf = i d dbar log Omega`
//! can only hold for the exact part; the metric flow is then the Kahler-Ricci
//! flow twisted by the constant form `B_inf`.

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, GridSpec, ScalarField};
use crate::hermitian::{HermitianField, HermitianMatrix};

/// Tolerance for `i d dbar log Omega = omega_inf - B_inf`.
pub const TWIST_TOLERANCE: f64 = 1e-10;

/// Samples of `t` used when bounding `sup log(omega_t^n / Omega)`.
const C_U_SAMPLES: usize = 64;
const C_U_MARGIN: f64 = 0.01;

/// One Fourier mode `cos * cos(k.x) + sin * sin(k.x)` over the real axes
/// `(x1, y1, x2, y2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Mode {
    pub k: [i32; 4],
    #[serde(default)]
    pub cos: f64,
    #[serde(default)]
    pub sin: f64,
}

/// A band-limited real potential given by its Fourier modes.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Potential {
    #[serde(default)]
    pub constant: f64,
    #[serde(default)]
    pub modes: Vec<Mode>,
}

impl Potential {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn is_zero(&self) -> bool {
        self.constant == 0.0 && self.modes.iter().all(|m| m.cos == 0.0 && m.sin == 0.0)
    }

    pub fn eval(&self, x: [f64; 4]) -> f64 {
        self.constant
            + self
                .modes
                .iter()
                .map(|m| {
                    let phase: f64 = (0..4).map(|a| m.k[a] as f64 * x[a]).sum();
                    m.cos * phase.cos() + m.sin * phase.sin()
                })
                .sum::<f64>()
    }

    pub fn sample(&self, spec: GridSpec) -> ScalarField {
        ScalarField::from_fn(spec, |x| self.eval(x))
    }

    pub fn scaled(&self, a: f64) -> Self {
        Self {
            constant: a * self.constant,
            modes: self
                .modes
                .iter()
                .map(|m| Mode {
                    k: m.k,
                    cos: a * m.cos,
                    sin: a * m.sin,
                })
                .collect(),
        }
    }

    /// Upper bound on the operator norm of `i d dbar` of the potential:
    /// each mode contributes its amplitude times `|k|^2 / 4`.
    pub fn hessian_bound(&self) -> f64 {
        self.modes
            .iter()
            .map(|m| {
                let k2: f64 = m.k.iter().map(|&k| (k * k) as f64).sum();
                m.cos.hypot(m.sin) * k2 / 4.0
            })
            .sum()
    }

    /// Random combination of (at most) `count` distinct low modes with
    /// components in {-1, 0, 1} on the first `axes` real axes, scaled so that
    /// [`Potential::hessian_bound`] equals `hessian_norm`.
    pub fn random(seed: u64, axes: usize, count: usize, hessian_norm: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // distinct modes up to sign
        let available = (3usize.pow(axes as u32) - 1) / 2;
        let count = count.min(available);
        let mut modes: Vec<Mode> = Vec::with_capacity(count);
        while modes.len() < count {
            let mut k = [0i32; 4];
            for slot in k.iter_mut().take(axes) {
                *slot = rng.random_range(-1..=1);
            }
            if k.iter().all(|&c| c == 0) {
                continue;
            }
            // k and -k are the same mode
            let neg = k.map(|c| -c);
            if modes.iter().any(|m| m.k == k || m.k == neg) {
                continue;
            }
            modes.push(Mode {
                k,
                cos: rng.random_range(-1.0..1.0),
                sin: rng.random_range(-1.0..1.0),
            });
        }
        let p = Self {
            constant: 0.0,
            modes,
        };
        let bound = p.hessian_bound();
        p.scaled(hessian_norm / bound)
    }

    /// Random combination of (at most) `count` distinct modes drawn from
    /// `candidates`, scaled like [`Potential::random`].
    pub fn random_from(seed: u64, candidates: &[[i32; 4]], count: usize, hessian_norm: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut pool = candidates.to_vec();
        let mut modes = Vec::with_capacity(count.min(pool.len()));
        while modes.len() < count && !pool.is_empty() {
            let k = pool.swap_remove(rng.random_range(0..pool.len()));
            modes.push(Mode {
                k,
                cos: rng.random_range(-1.0..1.0),
                sin: rng.random_range(-1.0..1.0),
            });
        }
        let p = Self {
            constant: 0.0,
            modes,
        };
        let bound = p.hessian_bound();
        if bound > 0.0 {
            p.scaled(hessian_norm / bound)
        } else {
            p
        }
    }

    fn check_resolved(&self, spec: GridSpec, what: &str) -> Result<()> {
        let shape = spec.shape();
        for m in &self.modes {
            for a in 0..4 {
                let limit = shape[a] as i32 / 2;
                let ok = if shape[a] == 1 { m.k[a] == 0 } else { m.k[a].abs() < limit };
                if !ok {
                    return Err(Error::Scenario(format!(
                        "{what}: mode {:?} not resolved on a grid of shape {shape:?}",
                        m.k
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Holomorphic reference map used by the Schwarz-type monitors.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReferenceMap {
    #[default]
    None,
    /// Projection of the surface onto its first torus factor.
    BaseProjection,
}

/// Background data of one flow.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub n: usize,
    pub b0: HermitianMatrix,
    pub b_inf: HermitianMatrix,
    #[serde(default)]
    pub psi0: Potential,
    #[serde(default)]
    pub psi_inf: Potential,
    #[serde(default)]
    pub log_omega: Potential,
    /// Degeneration time `T`; `None` means `T = infinity`.
    #[serde(default)]
    pub horizon: Option<f64>,
    /// Simulation end time.
    pub t_end: f64,
    /// All data depend on `z^1` only (n = 2).
    #[serde(default)]
    pub base_only: bool,
    #[serde(default)]
    pub reference_map: ReferenceMap,
}

impl Scenario {
    pub fn horizon_value(&self) -> f64 {
        self.horizon.unwrap_or(f64::INFINITY)
    }

    pub fn is_finite_time(&self) -> bool {
        self.horizon.is_some()
    }

    /// Constant part of `omega_t`.
    pub fn class_at(&self, t: f64) -> HermitianMatrix {
        let e = (-t).exp();
        self.b0.lin_comb(e, &self.b_inf, 1.0 - e)
    }

    /// The grid this scenario lives on at `points` per resolved axis.
    pub fn grid_spec(&self, points: usize) -> Result<GridSpec> {
        if self.base_only {
            if self.n != 2 {
                return Err(Error::UnsupportedDimension(self.n));
            }
            GridSpec::fiber_invariant(points)
        } else {
            GridSpec::new(self.n, points)
        }
    }

    /// Stationary flow: `omega_0 = omega_inf = I`, `Omega = 1`.
    pub fn ke_fixed_point(n: usize) -> Self {
        Self::homogeneous(n, 1.0, 1.0).named("ke_fixed_point")
    }

    /// Spatially constant data `omega_0 = a I`, `omega_inf = b I`, `Omega = 1`.
    pub fn homogeneous(n: usize, a: f64, b: f64) -> Self {
        Self {
            name: "homogeneous".into(),
            n,
            b0: HermitianMatrix::scalar(n, a),
            b_inf: HermitianMatrix::scalar(n, b),
            psi0: Potential::zero(),
            psi_inf: Potential::zero(),
            log_omega: Potential::zero(),
            horizon: None,
            t_end: 10.0,
            base_only: false,
            reference_map: ReferenceMap::None,
        }
    }

    /// `B0 = 2I`, `B_inf = I` with random low-frequency potentials; the volume
    /// form matches `psi_inf`.
    pub fn generic_ample(n: usize, seed: u64) -> Self {
        let axes = 2 * n;
        let psi0 = Potential::random(seed, axes, 5, 0.3);
        let psi_inf = Potential::random(seed.wrapping_add(1), axes, 5, 0.3);
        Self {
            name: "generic_ample".into(),
            n,
            b0: HermitianMatrix::scalar(n, 2.0),
            b_inf: HermitianMatrix::identity(n),
            log_omega: psi_inf.clone(),
            psi0,
            psi_inf,
            horizon: None,
            t_end: 10.0,
            base_only: false,
            reference_map: ReferenceMap::None,
        }
    }

    /// Complex surface whose limiting form is pulled back from the base torus:
    /// `B_inf = diag(1, 0)` and `psi_inf` depends on `(x1, y1)` only.
    pub fn fibration(seed: u64) -> Self {
        let psi_inf = Potential::random(seed, 2, 3, 0.3);
        Self {
            name: "fibration".into(),
            n: 2,
            b0: HermitianMatrix::identity(2),
            b_inf: HermitianMatrix::diag(&[1.0, 0.0]),
            psi0: Potential::zero(),
            log_omega: psi_inf.clone(),
            psi_inf,
            horizon: None,
            t_end: 10.0,
            base_only: true,
            reference_map: ReferenceMap::BaseProjection,
        }
    }

    /// Finite-time degeneration at `horizon`: `B_T` is singular and
    /// `psi_inf` is chosen so that `omega_t = s(t) omega_0` along the collapsing
    /// direction with `s(T) = 0`.
    pub fn finite_time(n: usize, horizon: f64, seed: u64) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::Scenario(format!("finite horizon must be positive, got {horizon}")));
        }
        let e = (-horizon).exp();
        let c = e / (1.0 - e);
        let b0 = HermitianMatrix::scalar(n, 2.0);
        let b_inf = match n {
            1 => HermitianMatrix::scalar(1, -2.0 * c),
            _ => HermitianMatrix::diag(&[-2.0 * c, 1.0]),
        };
        // Along the collapsing direction a mode of wavevector k relaxes at rate
        // |k|^2 / (4 B0 c (T - t)) while the class shrinks at rate 1 / (T - t);
        // modes with |k|^2 <= 4 B0 c would pinch the metric ahead of the class.
        // The lattice spanned by (2, 2) and (2, -2) clears this for T >= 1.
        let mut candidates = vec![[2, 2, 0, 0], [2, -2, 0, 0]];
        if n == 2 {
            candidates.extend([[0, 0, 1, 0], [0, 0, 0, 1], [0, 0, 1, 1], [2, 2, 1, 0]]);
        }
        let psi0 = Potential::random_from(seed, &candidates, 4, 0.4);
        let psi_inf = psi0.scaled(-c);
        Ok(Self {
            name: "finite_time".into(),
            n,
            b0,
            b_inf,
            log_omega: psi_inf.clone(),
            psi0,
            psi_inf,
            horizon: Some(horizon),
            t_end: horizon,
            base_only: false,
            reference_map: ReferenceMap::None,
        })
    }

    fn named(mut self, name: &str) -> Self {
        self.name = name.into();
        self
    }

    /// Looks up a catalog scenario by name with the given parameters.
    pub fn by_name(name: &str, params: &ScenarioParams) -> Result<Self> {
        let n = params.n;
        let mut s = match name {
            "ke_fixed_point" => Self::ke_fixed_point(n),
            "homogeneous" => Self::homogeneous(n, params.a, params.b),
            "generic_ample" => Self::generic_ample(n, params.seed),
            "fibration" => {
                if n != 2 {
                    return Err(Error::UnsupportedDimension(n));
                }
                Self::fibration(params.seed)
            }
            "finite_time" => Self::finite_time(n, params.horizon, params.seed)?,
            other => return Err(Error::Scenario(format!("unknown scenario `{other}`"))),
        };
        if let Some(t_end) = params.t_end {
            s.t_end = t_end;
        }
        Ok(s)
    }
}

/// Parameters of the built-in catalog.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioParams {
    pub n: usize,
    pub a: f64,
    pub b: f64,
    pub horizon: f64,
    pub seed: u64,
    pub t_end: Option<f64>,
}

impl Default for ScenarioParams {
    fn default() -> Self {
        Self {
            n: 2,
            a: 2.0,
            b: 1.0,
            horizon: 1.0,
            seed: 7,
            t_end: None,
        }
    }
}

/// The catalog at complex dimension `n` (the fibration only exists for n = 2).
pub fn builtin_scenarios(n: usize, seed: u64) -> Result<Vec<Scenario>> {
    let mut out = vec![
        Scenario::ke_fixed_point(n),
        Scenario::homogeneous(n, 2.0, 1.0),
        Scenario::generic_ample(n, seed),
    ];
    if n == 2 {
        out.push(Scenario::fibration(seed));
    }
    out.push(Scenario::finite_time(n, 1.0, seed)?);
    Ok(out)
}

/// Constants entering the certificates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertificateConstants {
    /// Upper bound for `u`.
    pub c_u: f64,
    /// Denominator constant of the gradient and Laplacian quantities.
    pub c_v: f64,
}

impl CertificateConstants {
    pub const DEFAULT_C_V: f64 = 10.0;
}

/// A scenario discretized on a grid, with every derived background field.
#[derive(Debug)]
pub struct Background {
    scenario: Scenario,
    grid: Grid,
    omega0: HermitianField,
    omega_inf: HermitianField,
    /// `omega_0 - omega_inf`.
    delta: HermitianField,
    log_omega: ScalarField,
    /// Reference form `omega_T` (`omega_inf` when `T` is infinite).
    omega_ref: HermitianField,
}

impl Background {
    pub fn new(scenario: Scenario, points: usize) -> Result<Self> {
        let spec = scenario.grid_spec(points)?;
        if scenario.b0.n() != scenario.n || scenario.b_inf.n() != scenario.n {
            return Err(Error::Scenario(format!(
                "background matrices must be {0}x{0}",
                scenario.n
            )));
        }
        if !(scenario.t_end >= 0.0) {
            return Err(Error::Scenario(format!("t_end must be >= 0, got {}", scenario.t_end)));
        }
        for (p, what) in [
            (&scenario.psi0, "psi0"),
            (&scenario.psi_inf, "psi_inf"),
            (&scenario.log_omega, "log_omega"),
        ] {
            p.check_resolved(spec, what)?;
        }
        let grid = Grid::new(spec);
        let form = |b: &HermitianMatrix, p: &Potential| -> Result<HermitianField> {
            Ok(grid.complex_hessian(&p.sample(spec))?.add_constant(b))
        };
        let omega0 = form(&scenario.b0, &scenario.psi0)?;
        let omega_inf = form(&scenario.b_inf, &scenario.psi_inf)?;
        let delta = omega0.lin_comb(1.0, &omega_inf, -1.0);
        let log_omega = scenario.log_omega.sample(spec);
        let omega_ref = match scenario.horizon {
            None => omega_inf.clone(),
            Some(t) => {
                let e = (-t).exp();
                omega0.lin_comb(e, &omega_inf, 1.0 - e)
            }
        };
        let bg = Self {
            scenario,
            grid,
            omega0,
            omega_inf,
            delta,
            log_omega,
            omega_ref,
        };
        bg.validate()?;
        Ok(bg)
    }

    fn validate(&self) -> Result<()> {
        let s = &self.scenario;
        self.omega0
            .check_metric()
            .map_err(|e| Error::Scenario(format!("omega_0 is not a Kahler form: {e}")))?;
        let psd_tol = 1e-12;
        match s.horizon {
            None => {
                let w = self.omega_inf.min_eigenvalue();
                if w.value < -psd_tol {
                    return Err(Error::Scenario(format!(
                        "omega_inf not semipositive: eigenvalue {} at point {}",
                        w.value, w.index
                    )));
                }
            }
            Some(horizon) => {
                if !(horizon > 0.0) {
                    return Err(Error::Scenario(format!("horizon must be positive, got {horizon}")));
                }
                let class = s.class_at(horizon);
                let [lo, _] = class.eigenvalues();
                let scale = s.b0.operator_norm().max(s.b_inf.operator_norm());
                if lo.abs() > 1e-10 * scale {
                    return Err(Error::Scenario(format!(
                        "B_T must be singular at T = {horizon}: smallest eigenvalue {lo}"
                    )));
                }
                let w = self.omega_ref.min_eigenvalue();
                if w.value < -psd_tol * scale {
                    return Err(Error::Scenario(format!(
                        "omega_T not semipositive: eigenvalue {} at point {}",
                        w.value, w.index
                    )));
                }
                for k in 0..C_U_SAMPLES {
                    let t = horizon * k as f64 / C_U_SAMPLES as f64;
                    self.omega_at(t).check_metric().map_err(|e| {
                        Error::Scenario(format!("omega_t degenerates before T at t = {t}: {e}"))
                    })?;
                }
                for gap in [1e-3, 1e-6] {
                    let t = horizon - gap * horizon;
                    self.omega_at(t).check_metric().map_err(|e| {
                        Error::Scenario(format!("omega_t degenerates before T at t = {t}: {e}"))
                    })?;
                }
            }
        }
        let defect = self.twist_defect()?;
        if defect > TWIST_TOLERANCE {
            return Err(Error::Scenario(format!(
                "i d dbar log Omega differs from omega_inf - B_inf by {defect:e}"
            )));
        }
        Ok(())
    }

    /// `sup |i d dbar log Omega - (omega_inf - B_inf)|`.
    pub fn twist_defect(&self) -> Result<f64> {
        let exact = self
            .omega_inf
            .map(|m| *m - self.scenario.b_inf);
        let hess = self.grid.complex_hessian(&self.log_omega)?;
        Ok(hess.lin_comb(1.0, &exact, -1.0).sup_entry_norm())
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn spec(&self) -> GridSpec {
        self.grid.spec()
    }

    pub fn n(&self) -> usize {
        self.scenario.n
    }

    pub fn omega0(&self) -> &HermitianField {
        &self.omega0
    }

    pub fn omega_inf(&self) -> &HermitianField {
        &self.omega_inf
    }

    /// `omega_0 - omega_inf`.
    pub fn delta(&self) -> &HermitianField {
        &self.delta
    }

    pub fn log_omega(&self) -> &ScalarField {
        &self.log_omega
    }

    pub fn omega_ref(&self) -> &HermitianField {
        &self.omega_ref
    }

    pub fn twist(&self) -> &HermitianMatrix {
        &self.scenario.b_inf
    }

    pub fn horizon(&self) -> f64 {
        self.scenario.horizon_value()
    }

    /// `omega_t` without the horizon check (used for `t = T` itself).
    pub(crate) fn omega_at(&self, t: f64) -> HermitianField {
        let e = (-t).exp();
        self.omega0.lin_comb(e, &self.omega_inf, 1.0 - e)
    }

    /// `omega_t = omega_inf + e^{-t} (omega_0 - omega_inf)`, for `0 <= t < T`.
    pub fn interpolate_background(&self, t: f64) -> Result<HermitianField> {
        if !(t >= 0.0 && t < self.horizon()) {
            return Err(Error::Horizon {
                t,
                horizon: self.horizon(),
            });
        }
        Ok(self.omega_at(t))
    }

    /// Upper bound for `u`: the supremum of `log(omega_t^n / Omega)` over
    /// sampled times and all grid points, plus a small margin when positive.
    pub fn compute_c_u(&self) -> Result<f64> {
        let stop = match self.scenario.horizon {
            Some(t) => (t * (1.0 - 1e-3)).min(self.scenario.t_end),
            None => self.scenario.t_end,
        };
        let mut sup = f64::NEG_INFINITY;
        for k in 0..=C_U_SAMPLES {
            let t = stop * k as f64 / C_U_SAMPLES as f64;
            let omega_t = self.interpolate_background(t)?;
            let ld = crate::hermitian::log_det(&omega_t).map_err(|e| {
                Error::Scenario(format!("omega_t lost positivity at t = {t}: {e}"))
            })?;
            sup = sup.max(ld.lin_comb(1.0, &self.log_omega, -1.0).max());
        }
        Ok(if sup > 0.0 { sup + C_U_MARGIN } else { 0.0 })
    }
}
