//! Periodic spectral fields on the flat torus `C^n / (2 pi Z)^{2n}`, `n` in {1, 2}.
//!
//! Real coordinates are ordered `(x1, y1, x2, y2)` with `z^j = x^j + i y^j`;
//! storage is row-major with the last axis fastest. All differentiation is
//! Fourier-exact for band-limited data: odd derivatives drop the Nyquist
//! mode, second derivatives along a single axis keep it.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, Witness};
use crate::hermitian::{HermitianField, HermitianMatrix};

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Discretization of the torus.
///
/// `fiber_invariant` grids (n = 2 only) carry a single point along the
/// second complex direction: every field on them is constant along the fiber
/// `z^2`, which is exactly the symmetry class of data pulled back from the
/// base torus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    n: usize,
    points: usize,
    fiber_invariant: bool,
}

impl GridSpec {
    pub fn new(n: usize, points: usize) -> Result<Self> {
        Self::validate(n, points)?;
        Ok(Self {
            n,
            points,
            fiber_invariant: false,
        })
    }

    /// A complex surface grid whose fields do not depend on `z^2`.
    pub fn fiber_invariant(points: usize) -> Result<Self> {
        Self::validate(2, points)?;
        Ok(Self {
            n: 2,
            points,
            fiber_invariant: true,
        })
    }

    fn validate(n: usize, points: usize) -> Result<()> {
        if !(1..=2).contains(&n) {
            return Err(Error::InvalidGrid(format!(
                "complex dimension must be 1 or 2, got {n}"
            )));
        }
        if points < 8 || points % 2 != 0 {
            return Err(Error::InvalidGrid(format!(
                "points per axis must be even and >= 8, got {points}"
            )));
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Points per resolved real axis.
    pub fn points(&self) -> usize {
        self.points
    }

    pub fn is_fiber_invariant(&self) -> bool {
        self.fiber_invariant
    }

    pub fn real_axes(&self) -> usize {
        2 * self.n
    }

    /// Points along each of the four (padded) real axes.
    pub fn shape(&self) -> [usize; 4] {
        let p = self.points;
        match (self.n, self.fiber_invariant) {
            (1, _) => [p, p, 1, 1],
            (_, false) => [p, p, p, p],
            (_, true) => [p, p, 1, 1],
        }
    }

    /// Top resolved wavenumber along complex direction `j` (0 when the
    /// direction is collapsed).
    pub fn direction_wavenumber(&self, j: usize) -> f64 {
        if self.shape()[2 * j] == 1 {
            0.0
        } else {
            (self.points / 2) as f64
        }
    }

    pub fn len(&self) -> usize {
        self.shape().iter().product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn multi_index(&self, index: usize) -> [usize; 4] {
        let s = self.shape();
        let mut rem = index;
        let mut out = [0; 4];
        for a in (0..4).rev() {
            out[a] = rem % s[a];
            rem /= s[a];
        }
        out
    }

    /// Real coordinates `(x1, y1, x2, y2)` of a grid point.
    pub fn coords(&self, index: usize) -> [f64; 4] {
        let s = self.shape();
        let m = self.multi_index(index);
        let mut x = [0.0; 4];
        for a in 0..4 {
            x[a] = 2.0 * PI * m[a] as f64 / s[a] as f64;
        }
        x
    }
}

/// A real scalar sampled on the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    spec: GridSpec,
    values: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Reduction {
    Max,
    Min,
    SupNorm,
    Mean,
}

impl ScalarField {
    pub fn from_values(spec: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != spec.len() {
            return Err(Error::ShapeMismatch(format!(
                "expected {} values, got {}",
                spec.len(),
                values.len()
            )));
        }
        Ok(Self { spec, values })
    }

    pub fn constant(spec: GridSpec, c: f64) -> Self {
        Self {
            spec,
            values: vec![c; spec.len()],
        }
    }

    pub fn zeros(spec: GridSpec) -> Self {
        Self::constant(spec, 0.0)
    }

    /// Samples `f(x1, y1, x2, y2)` at every grid point.
    pub fn from_fn(spec: GridSpec, f: impl Fn([f64; 4]) -> f64 + Sync) -> Self {
        let values = (0..spec.len())
            .into_par_iter()
            .map(|i| f(spec.coords(i)))
            .collect();
        Self { spec, values }
    }

    pub fn spec(&self) -> GridSpec {
        self.spec
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64 + Sync) -> Self {
        Self {
            spec: self.spec,
            values: self.values.par_iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_with(&self, other: &Self, f: impl Fn(f64, f64) -> f64 + Sync) -> Self {
        debug_assert_eq!(self.spec, other.spec);
        Self {
            spec: self.spec,
            values: self
                .values
                .par_iter()
                .zip(other.values.par_iter())
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    /// `a * self + b * other`.
    pub fn lin_comb(&self, a: f64, other: &Self, b: f64) -> Self {
        self.zip_with(other, |x, y| a * x + b * y)
    }

    pub fn check_finite(&self) -> Result<()> {
        match self.values.iter().position(|v| !v.is_finite()) {
            Some(index) => Err(Error::DataCorruption {
                index,
                value: self.values[index],
            }),
            None => Ok(()),
        }
    }

    pub fn reduce(&self, kind: Reduction) -> f64 {
        match kind {
            Reduction::Max => self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            Reduction::Min => self.values.iter().copied().fold(f64::INFINITY, f64::min),
            Reduction::SupNorm => self.values.iter().fold(0.0, |m, v| f64::max(m, v.abs())),
            Reduction::Mean => self.values.iter().sum::<f64>() / self.values.len() as f64,
        }
    }

    pub fn max(&self) -> f64 {
        self.reduce(Reduction::Max)
    }

    pub fn min(&self) -> f64 {
        self.reduce(Reduction::Min)
    }

    pub fn sup_norm(&self) -> f64 {
        self.reduce(Reduction::SupNorm)
    }

    pub fn mean(&self) -> f64 {
        self.reduce(Reduction::Mean)
    }

    /// Grid point and value of the maximum.
    pub fn argmax(&self) -> Witness {
        let (index, value) = self
            .values
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, v)| {
                if v > bv {
                    (i, v)
                } else {
                    (bi, bv)
                }
            });
        Witness { index, value }
    }

    pub fn argmin(&self) -> Witness {
        let w = self.map(|v| -v).argmax();
        Witness {
            index: w.index,
            value: -w.value,
        }
    }
}

/// Spectral engine: FFT plans and wavenumber tables for one [`GridSpec`].
pub struct Grid {
    spec: GridSpec,
    forward: Vec<Option<Arc<dyn Fft<f64>>>>,
    inverse: Vec<Option<Arc<dyn Fft<f64>>>>,
    /// Signed integer wavenumbers per padded real axis.
    wavenumbers: [Vec<f64>; 4],
}

impl std::fmt::Debug for Grid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Grid").field("spec", &self.spec).finish()
    }
}

impl Grid {
    pub fn new(spec: GridSpec) -> Self {
        let mut planner = FftPlanner::new();
        let shape = spec.shape();
        let mut forward = Vec::with_capacity(4);
        let mut inverse = Vec::with_capacity(4);
        for &len in &shape {
            if len > 1 {
                forward.push(Some(planner.plan_fft_forward(len)));
                inverse.push(Some(planner.plan_fft_inverse(len)));
            } else {
                forward.push(None);
                inverse.push(None);
            }
        }
        let wavenumbers = shape.map(|len| {
            (0..len)
                .map(|i| {
                    if i <= len / 2 {
                        i as f64
                    } else {
                        i as f64 - len as f64
                    }
                })
                .collect::<Vec<_>>()
        });
        Self {
            spec,
            forward,
            inverse,
            wavenumbers,
        }
    }

    pub fn spec(&self) -> GridSpec {
        self.spec
    }

    fn check(&self, f: &ScalarField) -> Result<()> {
        if f.spec != self.spec {
            return Err(Error::ShapeMismatch(format!(
                "field on {:?}, grid is {:?}",
                f.spec, self.spec
            )));
        }
        f.check_finite()
    }

    fn transform(&self, data: &mut [Complex64], inverse: bool) {
        let shape = self.spec.shape();
        let plans = if inverse { &self.inverse } else { &self.forward };
        for axis in 0..4 {
            let Some(plan) = &plans[axis] else { continue };
            let len = shape[axis];
            let stride: usize = shape[axis + 1..].iter().product();
            if stride == 1 {
                data.par_chunks_mut(len).for_each(|line| plan.process(line));
                continue;
            }
            let block = len * stride;
            let mut lines = vec![Complex64::default(); data.len()];
            lines.par_iter_mut().enumerate().for_each(|(pos, slot)| {
                let line = pos / len;
                let i = pos % len;
                let (outer, r) = (line / stride, line % stride);
                *slot = data[outer * block + i * stride + r];
            });
            lines.par_chunks_mut(len).for_each(|line| plan.process(line));
            data.par_iter_mut().enumerate().for_each(|(idx, slot)| {
                let outer = idx / block;
                let rem = idx % block;
                let (i, r) = (rem / stride, rem % stride);
                *slot = lines[(outer * stride + r) * len + i];
            });
        }
        if inverse {
            let scale = 1.0 / data.len() as f64;
            data.par_iter_mut().for_each(|z| *z *= scale);
        }
    }

    pub fn forward_real(&self, values: &[f64]) -> Vec<Complex64> {
        let mut data: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.transform(&mut data, false);
        data
    }

    pub fn forward_complex(&self, values: &[Complex64]) -> Vec<Complex64> {
        let mut data = values.to_vec();
        self.transform(&mut data, false);
        data
    }

    pub fn inverse(&self, mut spectrum: Vec<Complex64>) -> Vec<Complex64> {
        self.transform(&mut spectrum, true);
        spectrum
    }

    /// Wavenumber vector of a spectral index.
    fn wavevector(&self, index: usize) -> [f64; 4] {
        let m = self.spec.multi_index(index);
        [
            self.wavenumbers[0][m[0]],
            self.wavenumbers[1][m[1]],
            self.wavenumbers[2][m[2]],
            self.wavenumbers[3][m[3]],
        ]
    }

    fn is_nyquist(&self, axis: usize, k: f64) -> bool {
        let len = self.spec.shape()[axis];
        len > 1 && k == (len / 2) as f64
    }

    /// Symbol of `d/dx_axis`.
    fn d1(&self, axis: usize, k: &[f64; 4]) -> Complex64 {
        if self.is_nyquist(axis, k[axis]) {
            Complex64::new(0.0, 0.0)
        } else {
            I * k[axis]
        }
    }

    /// Symbol of `d^2/dx_a dx_b`.
    fn d2(&self, a: usize, b: usize, k: &[f64; 4]) -> Complex64 {
        if a == b {
            Complex64::new(-k[a] * k[a], 0.0)
        } else {
            self.d1(a, k) * self.d1(b, k)
        }
    }

    /// Symbol of `d/dz^j = (d/dx^j - i d/dy^j) / 2`.
    fn dz(&self, j: usize, k: &[f64; 4]) -> Complex64 {
        0.5 * (self.d1(2 * j, k) - I * self.d1(2 * j + 1, k))
    }

    /// Symbol of `d^2 / dz^j dzbar^l`.
    fn dz_dzbar(&self, j: usize, l: usize, k: &[f64; 4]) -> Complex64 {
        let (xj, yj, xl, yl) = (2 * j, 2 * j + 1, 2 * l, 2 * l + 1);
        0.25 * (self.d2(xj, xl, k) + self.d2(yj, yl, k))
            + 0.25 * I * (self.d2(xj, yl, k) - self.d2(yj, xl, k))
    }

    /// Symbol of `d^2 / dz^i dz^j`.
    fn dz_dz(&self, i: usize, j: usize, k: &[f64; 4]) -> Complex64 {
        let (xi, yi, xj, yj) = (2 * i, 2 * i + 1, 2 * j, 2 * j + 1);
        0.25 * (self.d2(xi, xj, k) - self.d2(yi, yj, k))
            - 0.25 * I * (self.d2(xi, yj, k) + self.d2(yi, xj, k))
    }

    fn apply(
        &self,
        spectrum: &[Complex64],
        symbol: impl Fn(&[f64; 4]) -> Complex64 + Sync,
    ) -> Vec<Complex64> {
        let out: Vec<Complex64> = spectrum
            .par_iter()
            .enumerate()
            .map(|(idx, &c)| c * symbol(&self.wavevector(idx)))
            .collect();
        self.inverse(out)
    }

    /// Partial derivative of a real field along real axis `axis`
    /// (0 = x1, 1 = y1, 2 = x2, 3 = y2).
    pub fn fourier_derivative(&self, f: &ScalarField, axis: usize) -> Result<ScalarField> {
        self.check(f)?;
        if axis >= self.spec.real_axes() {
            return Err(Error::InvalidGrid(format!(
                "axis {axis} out of range for n = {}",
                self.spec.n
            )));
        }
        let spectrum = self.forward_real(&f.values);
        let out = self.apply(&spectrum, |k| self.d1(axis, k));
        Ok(ScalarField {
            spec: self.spec,
            values: out.into_iter().map(|z| z.re).collect(),
        })
    }

    /// The field of complex Hessians `d^2 f / dz^j dzbar^k`, Hermitian at
    /// every point by construction.
    pub fn complex_hessian(&self, f: &ScalarField) -> Result<HermitianField> {
        self.check(f)?;
        let spectrum = self.forward_real(&f.values);
        Ok(self.complex_hessian_from_spectrum(&spectrum))
    }

    pub(crate) fn complex_hessian_from_spectrum(&self, spectrum: &[Complex64]) -> HermitianField {
        let n = self.spec.n;
        let mut out = HermitianField::zeros(self.spec);
        for j in 0..n {
            for l in j..n {
                let entry = self.apply(spectrum, |k| self.dz_dzbar(j, l, k));
                out.data_mut()
                    .par_iter_mut()
                    .zip(entry.par_iter())
                    .for_each(|(m, &z)| {
                        if j == l {
                            m[j][j] = Complex64::new(z.re, 0.0);
                        } else {
                            m[j][l] = z;
                            m[l][j] = z.conj();
                        }
                    });
            }
        }
        out
    }

    /// `(d f/dz^j)_j` for a real field.
    pub fn holomorphic_gradient(&self, f: &ScalarField) -> Result<Vec<Vec<Complex64>>> {
        self.check(f)?;
        let spectrum = self.forward_real(&f.values);
        Ok((0..self.spec.n)
            .map(|j| self.apply(&spectrum, |k| self.dz(j, k)))
            .collect())
    }

    /// `d^2 f / dz^i dz^j` for a real field, as `[i][j]` per point
    /// (exactly symmetric).
    pub fn holomorphic_hessian(&self, f: &ScalarField) -> Result<Vec<[[Complex64; 2]; 2]>> {
        self.check(f)?;
        let n = self.spec.n;
        let spectrum = self.forward_real(&f.values);
        let mut out = vec![[[Complex64::default(); 2]; 2]; self.spec.len()];
        for i in 0..n {
            for j in i..n {
                let entry = self.apply(&spectrum, |k| self.dz_dz(i, j, k));
                out.par_iter_mut().zip(entry.par_iter()).for_each(|(m, &z)| {
                    m[i][j] = z;
                    m[j][i] = z;
                });
            }
        }
        Ok(out)
    }

    /// `d/dz^j` of a complex-valued field.
    pub fn dz_complex(&self, values: &[Complex64], j: usize) -> Vec<Complex64> {
        let spectrum = self.forward_complex(values);
        self.apply(&spectrum, |k| self.dz(j, k))
    }

    /// Fraction of spectral energy carried by wavevectors whose largest
    /// component exceeds two thirds of the resolved band.
    pub fn spectral_tail_fraction(&self, f: &ScalarField) -> Result<f64> {
        self.check(f)?;
        let spectrum = self.forward_real(&f.values);
        let cutoff = self.spec.points as f64 / 3.0;
        let mut total = 0.0;
        let mut tail = 0.0;
        for (idx, c) in spectrum.iter().enumerate() {
            let k = self.wavevector(idx);
            let e = c.norm_sqr();
            total += e;
            if k.iter().any(|ka| ka.abs() > cutoff) {
                tail += e;
            }
        }
        Ok(if total > 0.0 { tail / total } else { 0.0 })
    }

    /// `tr(g^{-1} i d dbar f)`, the Laplacian of `f` in the metric `g`.
    pub fn laplacian(&self, g: &HermitianField, f: &ScalarField) -> Result<ScalarField> {
        let hess = self.complex_hessian(f)?;
        crate::hermitian::trace_pair(g, &hess)
    }
}

/// A constant Hermitian matrix as a field.
pub fn constant_field(spec: GridSpec, m: &HermitianMatrix) -> HermitianField {
    HermitianField::constant(spec, m)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(n: usize, points: usize) -> GridSpec {
        GridSpec::new(n, points).unwrap()
    }

    #[test]
    fn grid_spec_validation() {
        assert!(GridSpec::new(3, 16).is_err());
        assert!(GridSpec::new(1, 6).is_err());
        assert!(GridSpec::new(1, 15).is_err());
        assert!(GridSpec::new(2, 12).is_ok());
        assert_eq!(GridSpec::new(2, 8).unwrap().len(), 4096);
        assert_eq!(GridSpec::fiber_invariant(16).unwrap().len(), 256);
    }

    #[test]
    fn derivative_of_sine() {
        let s = spec(1, 16);
        let grid = Grid::new(s);
        let f = ScalarField::from_fn(s, |x| x[0].sin());
        let df = grid.fourier_derivative(&f, 0).unwrap();
        let exact = ScalarField::from_fn(s, |x| x[0].cos());
        assert!(df.lin_comb(1.0, &exact, -1.0).sup_norm() <= 1e-12);
    }

    #[test]
    fn derivative_of_constant_vanishes() {
        let s = spec(2, 8);
        let grid = Grid::new(s);
        let f = ScalarField::constant(s, 3.0);
        for axis in 0..4 {
            assert_eq!(grid.fourier_derivative(&f, axis).unwrap().sup_norm(), 0.0);
        }
    }

    #[test]
    fn mixed_mode_derivative() {
        let s = spec(1, 16);
        let grid = Grid::new(s);
        let f = ScalarField::from_fn(s, |x| (3.0 * x[0]).sin() * (2.0 * x[1]).cos());
        let df = grid.fourier_derivative(&f, 1).unwrap();
        let exact = ScalarField::from_fn(s, |x| -2.0 * (3.0 * x[0]).sin() * (2.0 * x[1]).sin());
        assert!(df.lin_comb(1.0, &exact, -1.0).sup_norm() <= 1e-12);
    }

    #[test]
    fn non_finite_input_is_rejected() {
        let s = spec(1, 8);
        let grid = Grid::new(s);
        let mut values = vec![0.0; s.len()];
        values[5] = f64::NAN;
        let f = ScalarField::from_values(s, values).unwrap();
        assert!(matches!(
            grid.fourier_derivative(&f, 0),
            Err(Error::DataCorruption { index: 5, .. })
        ));
    }

    #[test]
    fn complex_hessian_examples() {
        let s = spec(1, 16);
        let grid = Grid::new(s);
        let h = grid
            .complex_hessian(&ScalarField::from_fn(s, |x| x[0].cos()))
            .unwrap();
        assert!((h.at(0).get(0, 0).re + 0.25).abs() < 1e-14);

        let h0 = grid.complex_hessian(&ScalarField::constant(s, 1.5)).unwrap();
        assert_eq!(h0.sup_entry_norm(), 0.0);

        let s2 = spec(2, 16);
        let grid2 = Grid::new(s2);
        let f = ScalarField::from_fn(s2, |x| x[0].cos() + x[2].cos());
        let h = grid2.complex_hessian(&f).unwrap();
        let mut err: f64 = 0.0;
        for i in 0..s2.len() {
            let x = s2.coords(i);
            let m = h.at(i);
            err = err
                .max((m.get(0, 0) - Complex64::new(-0.25 * x[0].cos(), 0.0)).norm())
                .max((m.get(1, 1) - Complex64::new(-0.25 * x[2].cos(), 0.0)).norm())
                .max(m.get(0, 1).norm());
        }
        assert!(err <= 1e-12, "{err}");
    }

    #[test]
    fn reductions() {
        let s = spec(1, 16);
        let f = ScalarField::from_fn(s, |x| x[0].sin());
        assert!((f.max() - 1.0).abs() < 1e-15);
        assert_eq!(ScalarField::constant(s, -2.0).sup_norm(), 2.0);
        let g = ScalarField::from_fn(s, |x| 1.0 + x[0].cos());
        assert!((g.mean() - 1.0).abs() <= 1e-15);
        assert_eq!(f.argmax().index, f.values().iter().position(|&v| v == f.max()).unwrap());
    }

    #[test]
    fn spectral_accuracy_improves_with_resolution() {
        let err = |points| {
            let s = spec(1, points);
            let grid = Grid::new(s);
            let f = ScalarField::from_fn(s, |x| x[0].cos().exp());
            let exact = ScalarField::from_fn(s, |x| -x[0].sin() * x[0].cos().exp());
            grid.fourier_derivative(&f, 0)
                .unwrap()
                .lin_comb(1.0, &exact, -1.0)
                .sup_norm()
        };
        let (e16, e32) = (err(16), err(32));
        assert!(e16 / e32.max(1e-300) >= 1e3, "{e16} {e32}");
    }

    #[test]
    fn hessian_matches_real_second_derivatives() {
        let s = spec(2, 8);
        let grid = Grid::new(s);
        let f = ScalarField::from_fn(s, |x| {
            (x[0] + x[3]).sin() + 0.3 * (x[1] - 2.0 * x[2]).cos() + 0.2 * (x[0] + x[1] + x[2]).sin()
        });
        let h = grid.complex_hessian(&f).unwrap();
        let d = |f: &ScalarField, a| grid.fourier_derivative(f, a).unwrap();
        let second: Vec<Vec<ScalarField>> = (0..4)
            .map(|a| (0..4).map(|b| d(&d(&f, a), b)).collect())
            .collect();
        for j in 0..2 {
            for k in 0..2 {
                for p in 0..s.len() {
                    let re = 0.25 * (second[2 * j][2 * k].values()[p] + second[2 * j + 1][2 * k + 1].values()[p]);
                    let im = 0.25 * (second[2 * j][2 * k + 1].values()[p] - second[2 * j + 1][2 * k].values()[p]);
                    let z = h.at(p).get(j, k);
                    assert!((z - Complex64::new(re, im)).norm() < 1e-12);
                }
            }
        }
        assert!(h.is_hermitian());
    }

    #[test]
    fn tail_fraction_of_low_mode_is_zero() {
        let s = spec(1, 16);
        let grid = Grid::new(s);
        let f = ScalarField::from_fn(s, |x| x[0].cos() + (2.0 * x[1]).sin());
        assert!(grid.spectral_tail_fraction(&f).unwrap() < 1e-28);
        let g = ScalarField::from_fn(s, |x| (7.0 * x[0]).cos());
        assert!(grid.spectral_tail_fraction(&g).unwrap() > 0.99);
    }

    #[test]
    fn fiber_invariant_grid_has_no_fiber_derivative() {
        let s = GridSpec::fiber_invariant(16).unwrap();
        let grid = Grid::new(s);
        let f = ScalarField::from_fn(s, |x| x[0].sin() * x[1].cos());
        let h = grid.complex_hessian(&f).unwrap();
        for p in 0..s.len() {
            let m = h.at(p);
            assert_eq!(m.get(1, 1).norm(), 0.0);
            assert_eq!(m.get(0, 1).norm(), 0.0);
        }
        assert_eq!(grid.fourier_derivative(&f, 2).unwrap().sup_norm(), 0.0);
    }
}
