//! Ground truth that does not go through the PDE solver: the spatially
//! homogeneous reduction (by quadrature and, independently, by a scalar RK4),
//! the invariants of the Kahler-Einstein fixed point, and a randomized check
//! of the pointwise form algebra.

use num_complex::Complex64;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::hermitian::HermitianMatrix;

/// Homogeneous solution sampled at the requested times.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HomogeneousTrajectory {
    pub a: f64,
    pub b: f64,
    pub c0: f64,
    pub n: usize,
    pub t: Vec<f64>,
    pub u: Vec<f64>,
    pub udot: Vec<f64>,
    pub uddot: Vec<f64>,
}

/// Forcing `f(t) = n log(b + e^{-t}(a - b)) + c0` of the reduced equation
/// `du/dt = f(t) - u`.
#[derive(Debug, Clone, Copy)]
struct Forcing {
    a: f64,
    b: f64,
    c0: f64,
    n: f64,
}

impl Forcing {
    fn new(a: f64, b: f64, c0: f64, n: usize, t_max: f64) -> Result<Self> {
        if !(a > 0.0) {
            return Err(Error::OracleDomain(format!("initial scale a must be positive, got {a}")));
        }
        let f = Self {
            a,
            b,
            c0,
            n: n as f64,
        };
        // the interpolant is monotone in t, so the endpoints decide
        let end = f.scale(t_max);
        if !(end > 0.0) {
            return Err(Error::OracleDomain(format!(
                "b + e^(-t)(a - b) = {end} <= 0 at t = {t_max}: the class degenerates"
            )));
        }
        Ok(f)
    }

    fn scale(&self, t: f64) -> f64 {
        self.b + (-t).exp() * (self.a - self.b)
    }

    fn value(&self, t: f64) -> f64 {
        self.n * self.scale(t).ln() + self.c0
    }

    fn derivative(&self, t: f64) -> f64 {
        -self.n * (-t).exp() * (self.a - self.b) / self.scale(t)
    }
}

/// `u(t) = int_0^t e^{s - t} f(s) ds` by adaptive quadrature, with `udot`
/// and `uddot` from the equation and its derivative.
pub fn solve_homogeneous(a: f64, b: f64, c0: f64, n: usize, t_samples: &[f64]) -> Result<HomogeneousTrajectory> {
    let t_max = t_samples.iter().cloned().fold(0.0, f64::max);
    if t_samples.iter().any(|&t| !(t >= 0.0 && t.is_finite())) {
        return Err(Error::OracleDomain("sample times must be finite and >= 0".into()));
    }
    let f = Forcing::new(a, b, c0, n, t_max)?;
    let mut traj = HomogeneousTrajectory {
        a,
        b,
        c0,
        n,
        t: t_samples.to_vec(),
        u: Vec::with_capacity(t_samples.len()),
        udot: Vec::with_capacity(t_samples.len()),
        uddot: Vec::with_capacity(t_samples.len()),
    };
    for &t in t_samples {
        let u = integrate(|s| (s - t).exp() * f.value(s), 0.0, t, 1e-13)?;
        let udot = f.value(t) - u;
        traj.u.push(u);
        traj.udot.push(udot);
        traj.uddot.push(f.derivative(t) - udot);
    }
    Ok(traj)
}

/// The same trajectory by classical RK4 on `du/dt = f(t) - u` with step `dt`
/// (the last step into each sample is shortened to land on it).
pub fn solve_homogeneous_rk4(
    a: f64,
    b: f64,
    c0: f64,
    n: usize,
    t_samples: &[f64],
    dt: f64,
) -> Result<Vec<f64>> {
    if t_samples.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::OracleDomain("sample times must be non-decreasing".into()));
    }
    let t_max = t_samples.last().cloned().unwrap_or(0.0);
    let f = Forcing::new(a, b, c0, n, t_max)?;
    let rhs = |t: f64, u: f64| f.value(t) - u;
    let (mut t, mut u) = (0.0, 0.0);
    let mut out = Vec::with_capacity(t_samples.len());
    for &target in t_samples {
        while t < target {
            let h = dt.min(target - t);
            let k1 = rhs(t, u);
            let k2 = rhs(t + 0.5 * h, u + 0.5 * h * k1);
            let k3 = rhs(t + 0.5 * h, u + 0.5 * h * k2);
            let k4 = rhs(t + h, u + h * k3);
            u += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            t = if t + h >= target { target } else { t + h };
        }
        out.push(u);
    }
    Ok(out)
}

// Gauss-Kronrod 7/15 abscissae and weights on [-1, 1].
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_728_0,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// One panel: (Kronrod estimate, |Kronrod - Gauss|).
fn gk15(f: &impl Fn(f64) -> f64, lo: f64, hi: f64) -> (f64, f64) {
    let c = 0.5 * (lo + hi);
    let h = 0.5 * (hi - lo);
    let fc = f(c);
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for j in 0..7 {
        let x = h * XGK[j];
        let pair = f(c - x) + f(c + x);
        kronrod += WGK[j] * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    (kronrod * h, (kronrod - gauss).abs() * h)
}

/// Adaptive bisection on GK15 panels to absolute tolerance `tol`.
pub fn integrate(f: impl Fn(f64) -> f64, lo: f64, hi: f64, tol: f64) -> Result<f64> {
    if hi == lo {
        return Ok(0.0);
    }
    let mut stack = vec![(lo, hi, tol, 0u32)];
    let mut total = 0.0;
    while let Some((a, b, tol, depth)) = stack.pop() {
        let (est, err) = gk15(&f, a, b);
        if !est.is_finite() {
            return Err(Error::OracleDomain(format!("integrand not finite on [{a}, {b}]")));
        }
        if err <= tol || depth >= 50 {
            if err > tol {
                return Err(Error::OracleDomain(format!(
                    "quadrature did not converge on [{a}, {b}] (error {err:e})"
                )));
            }
            total += est;
        } else {
            let m = 0.5 * (a + b);
            stack.push((m, b, 0.5 * tol, depth + 1));
            stack.push((a, m, 0.5 * tol, depth + 1));
        }
    }
    Ok(total)
}

/// Invariants of the stationary solution with `omega_0 = omega_inf = B`
/// and `Omega = det B`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KeReference {
    pub u: f64,
    pub r_tw: f64,
    pub phi: f64,
    pub v: f64,
    pub log_omega: f64,
}

pub fn ke_fixed_point_reference(b: &HermitianMatrix, n: usize) -> Result<KeReference> {
    if b.n() != n {
        return Err(Error::ShapeMismatch(format!("{0}x{0} matrix for n = {n}", b.n())));
    }
    if !b.is_metric() {
        return Err(Error::Positivity {
            index: 0,
            min_eigenvalue: b.min_eigenvalue(),
            floor: 0.0,
        });
    }
    Ok(KeReference {
        u: 0.0,
        r_tw: -(n as f64),
        phi: n as f64,
        v: 0.0,
        log_omega: b.det().ln(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FuzzReport {
    pub count: usize,
    /// Largest `|wedge ratio - tr / 2|`, relative to `1 + |tr|`.
    pub max_wedge_error: f64,
    /// Largest `(tr_g H)^2 / n - |H|_g^2`, relative to `1 + |H|_g^2`
    /// (non-positive when the Cauchy-Schwarz floor holds).
    pub max_cauchy_schwarz_excess: f64,
}

impl FuzzReport {
    pub fn passed(&self) -> bool {
        self.max_wedge_error <= 1e-12 && self.max_cauchy_schwarz_excess <= 1e-12
    }
}

fn random_hermitian(rng: &mut ChaCha8Rng) -> HermitianMatrix {
    let d0 = rng.random_range(-1.0..1.0);
    let d1 = rng.random_range(-1.0..1.0);
    let off = Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
    HermitianMatrix::from_upper(2, [[Complex64::new(d0, 0.0), off], [off.conj(), Complex64::new(d1, 0.0)]])
}

fn random_metric(rng: &mut ChaCha8Rng) -> HermitianMatrix {
    // A A^* + 0.1 I
    let mut a = [[Complex64::default(); 2]; 2];
    for row in a.iter_mut() {
        for z in row.iter_mut() {
            *z = Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        }
    }
    let mut g = [[Complex64::default(); 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            g[i][j] = a[i][0] * a[j][0].conj() + a[i][1] * a[j][1].conj();
        }
        g[i][i] = Complex64::new(g[i][i].re + 0.1, 0.0);
    }
    g[1][0] = g[0][1].conj();
    HermitianMatrix::from_upper(2, g)
}

/// Checks, on `count` random positive `g` and Hermitian `alpha`, that
/// `(g ^ alpha) / g^2 = tr_g(alpha) / 2` and `|alpha|_g^2 >= (tr_g alpha)^2 / 2`.
pub fn algebra_fuzzer(seed: u64, count: usize) -> FuzzReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = FuzzReport {
        count,
        max_wedge_error: 0.0,
        max_cauchy_schwarz_excess: f64::NEG_INFINITY,
    };
    for _ in 0..count {
        let g = random_metric(&mut rng);
        let alpha = random_hermitian(&mut rng);
        let tr = g.trace_pair(&alpha);
        let ratio = g.wedge_density(&alpha) / (2.0 * g.det());
        let err = (ratio - 0.5 * tr).abs() / (1.0 + tr.abs());
        report.max_wedge_error = report.max_wedge_error.max(err);
        let norm = g.pairing(&alpha, &alpha);
        let excess = (tr * tr / 2.0 - norm) / (1.0 + norm);
        report.max_cauchy_schwarz_excess = report.max_cauchy_schwarz_excess.max(excess);
    }
    if count == 0 {
        report.max_cauchy_schwarz_excess = 0.0;
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stationary_case() {
        let tr = solve_homogeneous(1.0, 1.0, 0.0, 2, &[0.0, 1.0, 7.0]).unwrap();
        assert!(tr.u.iter().chain(&tr.udot).chain(&tr.uddot).all(|&x| x == 0.0));
    }

    #[test]
    fn initial_slope_and_limit() {
        let tr = solve_homogeneous(2.0, 1.0, 0.0, 1, &[0.0, 40.0]).unwrap();
        assert_eq!(tr.u[0], 0.0);
        assert!((tr.udot[0] - 2f64.ln()).abs() < 1e-15);
        assert!(tr.u[1].abs() < 1e-12);
    }

    #[test]
    fn quadrature_matches_rk4() {
        let ts = [0.5, 1.0, 2.0, 5.0];
        let q = solve_homogeneous(2.0, 1.0, 0.0, 1, &ts).unwrap();
        let r = solve_homogeneous_rk4(2.0, 1.0, 0.0, 1, &ts, 1e-4).unwrap();
        for (a, b) in q.u.iter().zip(&r) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn quadrature_is_self_consistent() {
        // centred differences of u against the equation
        let h = 1e-3;
        for &t in &[0.3, 1.0, 3.0] {
            let ts = [t - 2.0 * h, t - h, t + h, t + 2.0 * h, t];
            let tr = solve_homogeneous(2.0, 0.5, 0.3, 2, &ts).unwrap();
            let u = &tr.u;
            let fd = (u[0] - 8.0 * u[1] + 8.0 * u[2] - u[3]) / (12.0 * h);
            assert!((fd - tr.udot[4]).abs() < 1e-8, "{fd} vs {}", tr.udot[4]);
        }
    }

    #[test]
    fn degenerate_interpolant_is_a_domain_error() {
        // b + e^{-t}(a - b) hits zero at t = ln 2
        assert!(matches!(
            solve_homogeneous(2.0, -2.0, 0.0, 1, &[1.0]),
            Err(Error::OracleDomain(_))
        ));
        assert!(solve_homogeneous(2.0, -2.0, 0.0, 1, &[0.5]).is_ok());
    }

    #[test]
    fn gauss_kronrod_on_known_integrals() {
        let v = integrate(|x| x.exp(), 0.0, 3.0, 1e-13).unwrap();
        assert!((v - (3f64.exp() - 1.0)).abs() < 1e-12);
        let v = integrate(|x| (1.0 + x).ln(), 0.0, 1.0, 1e-13).unwrap();
        assert!((v - (2.0 * 2f64.ln() - 1.0)).abs() < 1e-13);
    }

    #[test]
    fn ke_reference_examples() {
        let r = ke_fixed_point_reference(&HermitianMatrix::identity(2), 2).unwrap();
        assert_eq!(r.r_tw, -2.0);
        let r = ke_fixed_point_reference(&HermitianMatrix::scalar(1, 2.0), 1).unwrap();
        assert_eq!(r.u, 0.0);
        assert!((r.log_omega - 2f64.ln()).abs() < 1e-15);
        assert_eq!(ke_fixed_point_reference(&HermitianMatrix::identity(1), 1).unwrap().phi, 1.0);
    }

    #[test]
    fn fuzzer_passes() {
        let r = algebra_fuzzer(7, 10_000);
        assert!(r.passed(), "{r:?}");
    }

    #[test]
    fn fuzzer_edge_cases() {
        let g = HermitianMatrix::from_upper(
            2,
            [[Complex64::new(3.0, 0.0), Complex64::new(0.5, -1.0)], [Complex64::new(0.5, 1.0), Complex64::new(2.0, 0.0)]],
        );
        let ratio = |a: &HermitianMatrix| g.wedge_density(a) / (2.0 * g.det());
        assert!((ratio(&g) - 1.0).abs() < 1e-15);
        assert!((g.trace_pair(&g) - 2.0).abs() < 1e-15);
        assert!((ratio(&g.scale(-1.0)) + 1.0).abs() < 1e-15);
    }
}
