//! Pointwise Hermitian-form algebra and the Kahler-geometry kernels built on
//! it (traces, determinants, Christoffel symbols, covariant Hessians, Ricci).
//!
//! Component convention: a (1,1)-form `i a_{jk} dz^j ^ dzbar^k` is stored as
//! the matrix `A[j][k] = a_{jk}`. With `G` the metric matrix, the inverse
//! metric `g^{jk}` is `(G^{-1})[k][j]`, so `g^{jk} a_{jk} = tr(G^{-1} A)`.

use std::ops::{Add, Mul, Sub};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, GridSpec, ScalarField};

pub(crate) type Block = [[Complex64; 2]; 2];

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Relative eigenvalue floor for metric positivity.
pub const POSITIVITY_FLOOR: f64 = 1e-10;

/// A Hermitian `n x n` matrix, `n` in {1, 2}.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HermitianMatrix {
    n: usize,
    m: Block,
}

fn mat_mul(n: usize, a: &Block, b: &Block) -> Block {
    let mut c = [[ZERO; 2]; 2];
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                c[i][j] += a[i][k] * b[k][j];
            }
        }
    }
    c
}

fn mat_trace(n: usize, a: &Block) -> Complex64 {
    (0..n).map(|i| a[i][i]).sum()
}

impl HermitianMatrix {
    pub fn zero(n: usize) -> Self {
        Self { n, m: [[ZERO; 2]; 2] }
    }

    pub fn identity(n: usize) -> Self {
        Self::scalar(n, 1.0)
    }

    pub fn scalar(n: usize, a: f64) -> Self {
        let mut out = Self::zero(n);
        for i in 0..n {
            out.m[i][i] = Complex64::new(a, 0.0);
        }
        out
    }

    pub fn diag(d: &[f64]) -> Self {
        let mut out = Self::zero(d.len());
        for (i, &v) in d.iter().enumerate() {
            out.m[i][i] = Complex64::new(v, 0.0);
        }
        out
    }

    /// Builds from a full block; the lower triangle is taken as the conjugate
    /// of the upper one and the diagonal is made real.
    pub fn from_upper(n: usize, m: Block) -> Self {
        let mut out = Self { n, m };
        out.enforce_hermitian();
        out
    }

    /// Real and imaginary parts given as `n x n` row lists.
    pub fn from_parts(re: &[Vec<f64>], im: &[Vec<f64>]) -> Result<Self> {
        let n = re.len();
        if !(1..=2).contains(&n) || re.iter().any(|r| r.len() != n) {
            return Err(Error::Scenario(format!("matrix must be 1x1 or 2x2, got {re:?}")));
        }
        let mut m = [[ZERO; 2]; 2];
        for i in 0..n {
            for j in 0..n {
                let b = im.get(i).and_then(|r| r.get(j)).copied().unwrap_or(0.0);
                m[i][j] = Complex64::new(re[i][j], b);
            }
        }
        let out = Self { n, m };
        if !out.is_hermitian() {
            return Err(Error::Scenario(format!("matrix is not Hermitian: {re:?} + i {im:?}")));
        }
        Ok(out)
    }

    fn enforce_hermitian(&mut self) {
        for i in 0..self.n {
            self.m[i][i].im = 0.0;
            for j in i + 1..self.n {
                self.m[j][i] = self.m[i][j].conj();
            }
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.m[i][j]
    }

    pub fn block(&self) -> &Block {
        &self.m
    }

    pub fn is_hermitian(&self) -> bool {
        (0..self.n).all(|i| (0..self.n).all(|j| self.m[i][j] == self.m[j][i].conj()))
    }

    pub fn trace(&self) -> f64 {
        mat_trace(self.n, &self.m).re
    }

    pub fn det(&self) -> f64 {
        match self.n {
            1 => self.m[0][0].re,
            _ => self.m[0][0].re * self.m[1][1].re - self.m[0][1].norm_sqr(),
        }
    }

    /// Inverse; the caller guarantees non-singularity.
    pub fn inverse(&self) -> Self {
        match self.n {
            1 => Self::scalar(1, 1.0 / self.m[0][0].re),
            _ => {
                let d = self.det();
                let mut m = [[ZERO; 2]; 2];
                m[0][0] = Complex64::new(self.m[1][1].re / d, 0.0);
                m[1][1] = Complex64::new(self.m[0][0].re / d, 0.0);
                m[0][1] = -self.m[0][1] / d;
                m[1][0] = -self.m[1][0] / d;
                Self { n: 2, m }
            }
        }
    }

    /// Eigenvalues in ascending order (the second is meaningful only for
    /// `n = 2`).
    pub fn eigenvalues(&self) -> [f64; 2] {
        match self.n {
            1 => [self.m[0][0].re; 2],
            _ => {
                let a = self.m[0][0].re;
                let d = self.m[1][1].re;
                let mean = 0.5 * (a + d);
                let r = (0.25 * (a - d) * (a - d) + self.m[0][1].norm_sqr()).sqrt();
                [mean - r, mean + r]
            }
        }
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues()[0]
    }

    pub fn max_eigenvalue(&self) -> f64 {
        self.eigenvalues()[1]
    }

    /// Largest eigenvalue magnitude.
    pub fn operator_norm(&self) -> f64 {
        let [lo, hi] = self.eigenvalues();
        lo.abs().max(hi.abs())
    }

    /// `tr(self^{-1} alpha)`, with `self` a metric.
    pub fn trace_pair(&self, alpha: &Self) -> f64 {
        mat_trace(self.n, &mat_mul(self.n, &self.inverse().m, &alpha.m)).re
    }

    /// `tr(g^{-1} a g^{-1} b)` with `self = g`: the pointwise inner product of
    /// two (1,1)-forms.
    pub fn pairing(&self, a: &Self, b: &Self) -> f64 {
        let inv = self.inverse().m;
        let left = mat_mul(self.n, &inv, &a.m);
        let right = mat_mul(self.n, &inv, &b.m);
        mat_trace(self.n, &mat_mul(self.n, &left, &right)).re
    }

    /// `w^* M w`.
    pub fn quad(&self, w: &[Complex64]) -> f64 {
        let mut s = ZERO;
        for i in 0..self.n {
            for j in 0..self.n {
                s += w[i].conj() * self.m[i][j] * w[j];
            }
        }
        s.re
    }

    /// `M w`.
    pub fn apply(&self, w: &[Complex64]) -> [Complex64; 2] {
        let mut out = [ZERO; 2];
        for i in 0..self.n {
            for j in 0..self.n {
                out[i] += self.m[i][j] * w[j];
            }
        }
        out
    }

    pub fn scale(&self, a: f64) -> Self {
        let mut out = *self;
        for i in 0..self.n {
            for j in 0..self.n {
                out.m[i][j] *= a;
            }
        }
        out
    }

    /// `a * self + b * other`.
    pub fn lin_comb(&self, a: f64, other: &Self, b: f64) -> Self {
        debug_assert_eq!(self.n, other.n);
        let mut out = *self;
        for i in 0..self.n {
            for j in 0..self.n {
                out.m[i][j] = a * self.m[i][j] + b * other.m[i][j];
            }
        }
        out
    }

    /// Top-degree density of `self ^ other` for `n = 2`, normalized so that
    /// `w ^ w` has density `2 det w`.
    pub fn wedge_density(&self, other: &Self) -> f64 {
        let (a, b) = (&self.m, &other.m);
        (a[0][0] * b[1][1] + a[1][1] * b[0][0] - a[0][1] * b[1][0] - a[1][0] * b[0][1]).re
    }

    fn positivity_floor(&self) -> f64 {
        POSITIVITY_FLOOR * (self.trace() / self.n as f64).abs()
    }

    /// Whether the matrix clears the metric positivity floor.
    pub fn is_metric(&self) -> bool {
        let lo = self.min_eigenvalue();
        lo.is_finite() && lo > 0.0 && lo > self.positivity_floor()
    }
}

impl Add for HermitianMatrix {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        self.lin_comb(1.0, &rhs, 1.0)
    }
}

impl Sub for HermitianMatrix {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        self.lin_comb(1.0, &rhs, -1.0)
    }
}

impl Mul<HermitianMatrix> for f64 {
    type Output = HermitianMatrix;
    fn mul(self, rhs: HermitianMatrix) -> HermitianMatrix {
        rhs.scale(self)
    }
}

#[derive(Serialize, Deserialize)]
struct MatrixRepr {
    re: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    im: Vec<Vec<f64>>,
}

impl Serialize for HermitianMatrix {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let n = self.n;
        let re = (0..n).map(|i| (0..n).map(|j| self.m[i][j].re).collect()).collect();
        let im: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| self.m[i][j].im).collect()).collect();
        let im = if im.iter().flatten().all(|&v| v == 0.0) {
            Vec::new()
        } else {
            im
        };
        MatrixRepr { re, im }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for HermitianMatrix {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let repr = MatrixRepr::deserialize(d)?;
        HermitianMatrix::from_parts(&repr.re, &repr.im).map_err(serde::de::Error::custom)
    }
}

/// A Hermitian matrix at every grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianField {
    spec: GridSpec,
    data: Vec<Block>,
}

impl HermitianField {
    pub fn zeros(spec: GridSpec) -> Self {
        Self {
            spec,
            data: vec![[[ZERO; 2]; 2]; spec.len()],
        }
    }

    pub fn constant(spec: GridSpec, m: &HermitianMatrix) -> Self {
        assert_eq!(m.n, spec.n(), "matrix dimension must match the grid");
        Self {
            spec,
            data: vec![m.m; spec.len()],
        }
    }

    pub fn from_fn(spec: GridSpec, f: impl Fn(usize) -> HermitianMatrix + Sync) -> Self {
        Self {
            spec,
            data: (0..spec.len()).into_par_iter().map(|i| f(i).m).collect(),
        }
    }

    pub fn spec(&self) -> GridSpec {
        self.spec
    }

    pub fn n(&self) -> usize {
        self.spec.n()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn at(&self, i: usize) -> HermitianMatrix {
        HermitianMatrix {
            n: self.spec.n(),
            m: self.data[i],
        }
    }

    pub(crate) fn data_mut(&mut self) -> &mut [Block] {
        &mut self.data
    }

    /// Pointwise map producing a scalar field.
    pub fn map_scalar(&self, f: impl Fn(&HermitianMatrix) -> f64 + Sync) -> ScalarField {
        let n = self.spec.n();
        let values = self
            .data
            .par_iter()
            .map(|&m| f(&HermitianMatrix { n, m }))
            .collect();
        ScalarField::from_values(self.spec, values).expect("same grid")
    }

    pub fn map(&self, f: impl Fn(&HermitianMatrix) -> HermitianMatrix + Sync) -> Self {
        let n = self.spec.n();
        Self {
            spec: self.spec,
            data: self
                .data
                .par_iter()
                .map(|&m| f(&HermitianMatrix { n, m }).m)
                .collect(),
        }
    }

    pub fn zip_with(
        &self,
        other: &Self,
        f: impl Fn(&HermitianMatrix, &HermitianMatrix) -> HermitianMatrix + Sync,
    ) -> Self {
        debug_assert_eq!(self.spec, other.spec);
        let n = self.spec.n();
        Self {
            spec: self.spec,
            data: self
                .data
                .par_iter()
                .zip(other.data.par_iter())
                .map(|(&a, &b)| f(&HermitianMatrix { n, m: a }, &HermitianMatrix { n, m: b }).m)
                .collect(),
        }
    }

    /// `a * self + b * other`.
    pub fn lin_comb(&self, a: f64, other: &Self, b: f64) -> Self {
        self.zip_with(other, |x, y| x.lin_comb(a, y, b))
    }

    pub fn add_constant(&self, c: &HermitianMatrix) -> Self {
        self.map(|m| *m + *c)
    }

    /// Largest entry modulus over the grid.
    pub fn sup_entry_norm(&self) -> f64 {
        let n = self.spec.n();
        self.data
            .iter()
            .flat_map(|m| (0..n).flat_map(move |i| (0..n).map(move |j| m[i][j].norm())))
            .fold(0.0, f64::max)
    }

    pub fn is_hermitian(&self) -> bool {
        (0..self.len()).all(|i| self.at(i).is_hermitian())
    }

    /// Fails with a positivity error naming the worst point if any matrix
    /// falls below the metric floor.
    pub fn check_metric(&self) -> Result<()> {
        let n = self.spec.n();
        let worst = self
            .data
            .par_iter()
            .enumerate()
            .filter_map(|(i, &m)| {
                let h = HermitianMatrix { n, m };
                (!h.is_metric()).then(|| (i, h.min_eigenvalue(), h.positivity_floor()))
            })
            .min_by(|a, b| {
                let ka = if a.1.is_nan() { f64::NEG_INFINITY } else { a.1 };
                let kb = if b.1.is_nan() { f64::NEG_INFINITY } else { b.1 };
                ka.total_cmp(&kb).then(a.0.cmp(&b.0))
            });
        match worst {
            Some((index, min_eigenvalue, floor)) => Err(Error::Positivity {
                index,
                min_eigenvalue,
                floor,
            }),
            None => Ok(()),
        }
    }

    /// Pointwise inverse; the field must be a metric.
    pub fn inverse(&self) -> Result<Self> {
        self.check_metric()?;
        Ok(self.map(|m| m.inverse()))
    }

    /// Minimum over the grid of the smallest eigenvalue, with its location.
    pub fn min_eigenvalue(&self) -> crate::error::Witness {
        self.map_scalar(|m| m.min_eigenvalue()).argmin()
    }
}

/// Christoffel symbols `Gamma^k_{ij}` of a Kahler metric at every point,
/// stored as `[k][i][j]`.
#[derive(Debug, Clone)]
pub struct ConnectionField {
    spec: GridSpec,
    data: Vec<[Complex64; 8]>,
}

impl ConnectionField {
    pub fn spec(&self) -> GridSpec {
        self.spec
    }

    pub fn get(&self, point: usize, k: usize, i: usize, j: usize) -> Complex64 {
        self.data[point][4 * k + 2 * i + j]
    }

    pub fn is_symmetric(&self) -> bool {
        let n = self.spec.n();
        self.data.iter().all(|g| {
            (0..n).all(|k| (0..n).all(|i| (0..n).all(|j| g[4 * k + 2 * i + j] == g[4 * k + 2 * j + i])))
        })
    }

    pub fn sup_norm(&self) -> f64 {
        self.data
            .iter()
            .flat_map(|g| g.iter().map(|z| z.norm()))
            .fold(0.0, f64::max)
    }
}

/// Pointwise `tr(g^{-1} alpha)`.
pub fn trace_pair(g: &HermitianField, alpha: &HermitianField) -> Result<ScalarField> {
    g.check_metric()?;
    let n = g.n();
    let values = g
        .data
        .par_iter()
        .zip(alpha.data.par_iter())
        .map(|(&gm, &am)| HermitianMatrix { n, m: gm }.trace_pair(&HermitianMatrix { n, m: am }))
        .collect();
    ScalarField::from_values(g.spec, values)
}

/// Pointwise `tr(g^{-1} a g^{-1} b)`.
pub fn metric_pairing(g: &HermitianField, a: &HermitianField, b: &HermitianField) -> Result<ScalarField> {
    g.check_metric()?;
    let n = g.n();
    let values = (0..g.len())
        .into_par_iter()
        .map(|i| {
            HermitianMatrix { n, m: g.data[i] }
                .pairing(&HermitianMatrix { n, m: a.data[i] }, &HermitianMatrix { n, m: b.data[i] })
        })
        .collect();
    ScalarField::from_values(g.spec, values)
}

pub fn log_det(g: &HermitianField) -> Result<ScalarField> {
    g.check_metric()?;
    Ok(g.map_scalar(|m| m.det().ln()))
}

/// Density ratio `(omega ^ alpha) / omega^2` on a complex surface.
pub fn wedge_ratio(omega: &HermitianField, alpha: &HermitianField) -> Result<ScalarField> {
    if omega.n() != 2 {
        return Err(Error::UnsupportedDimension(omega.n()));
    }
    omega.check_metric()?;
    let values = omega
        .data
        .par_iter()
        .zip(alpha.data.par_iter())
        .map(|(&w, &a)| {
            let w = HermitianMatrix { n: 2, m: w };
            let a = HermitianMatrix { n: 2, m: a };
            w.wedge_density(&a) / (2.0 * w.det())
        })
        .collect();
    ScalarField::from_values(omega.spec, values)
}

/// `Gamma^k_{ij} = g^{k l} d_i g_{j l}`, symmetrized in `(i, j)`.
pub fn christoffel(grid: &Grid, g: &HermitianField) -> Result<ConnectionField> {
    g.check_metric()?;
    let spec = g.spec;
    let n = spec.n();
    // dg[i][j][l] = d_i g_{j l}
    let mut dg = vec![vec![vec![Vec::new(); n]; n]; n];
    for j in 0..n {
        for l in 0..n {
            let entry: Vec<Complex64> = g.data.iter().map(|m| m[j][l]).collect();
            for (i, slot) in dg.iter_mut().enumerate() {
                slot[j][l] = grid.dz_complex(&entry, i);
            }
        }
    }
    let data = (0..spec.len())
        .into_par_iter()
        .map(|p| {
            let inv = HermitianMatrix { n, m: g.data[p] }.inverse();
            let mut out = [ZERO; 8];
            for i in 0..n {
                for j in i..n {
                    for k in 0..n {
                        let mut s = ZERO;
                        for l in 0..n {
                            let sym = 0.5 * (dg[i][j][l][p] + dg[j][i][l][p]);
                            s += inv.m[l][k] * sym;
                        }
                        out[4 * k + 2 * i + j] = s;
                        out[4 * k + 2 * j + i] = s;
                    }
                }
            }
            out
        })
        .collect();
    Ok(ConnectionField { spec, data })
}

/// Second covariant derivatives of a real function and their norms.
#[derive(Debug, Clone)]
pub struct CovariantHessians {
    /// `v_{;ij} = d_i d_j v - Gamma^k_{ij} d_k v`.
    pub h20: Vec<Block>,
    /// `d_i dbar_j v`.
    pub h11: HermitianField,
    /// `d_j v`.
    pub gradient: Vec<[Complex64; 2]>,
    /// `|nabla nabla v|^2`.
    pub h20_norm_sq: ScalarField,
    /// `|nabla nablabar v|^2`.
    pub h11_norm_sq: ScalarField,
    /// `|nabla v|^2 = g^{j i} v_j v_ibar`.
    pub gradient_norm_sq: ScalarField,
}

pub fn covariant_hessians(grid: &Grid, g: &HermitianField, v: &ScalarField) -> Result<CovariantHessians> {
    let gamma = christoffel(grid, g)?;
    covariant_hessians_with(grid, g, &gamma, v)
}

pub fn covariant_hessians_with(
    grid: &Grid,
    g: &HermitianField,
    gamma: &ConnectionField,
    v: &ScalarField,
) -> Result<CovariantHessians> {
    g.check_metric()?;
    let spec = g.spec;
    let n = spec.n();
    let h11 = grid.complex_hessian(v)?;
    let dd = grid.holomorphic_hessian(v)?;
    let grad_cols = grid.holomorphic_gradient(v)?;
    let gradient: Vec<[Complex64; 2]> = (0..spec.len())
        .map(|p| {
            let mut w = [ZERO; 2];
            for (j, col) in grad_cols.iter().enumerate() {
                w[j] = col[p];
            }
            w
        })
        .collect();
    let h20: Vec<Block> = (0..spec.len())
        .into_par_iter()
        .map(|p| {
            let mut out = [[ZERO; 2]; 2];
            for i in 0..n {
                for j in 0..n {
                    let mut s = dd[p][i][j];
                    for k in 0..n {
                        s -= gamma.get(p, k, i, j) * gradient[p][k];
                    }
                    out[i][j] = s;
                }
            }
            out
        })
        .collect();
    let mut h20_norm = Vec::with_capacity(spec.len());
    let mut h11_norm = Vec::with_capacity(spec.len());
    let mut grad_norm = Vec::with_capacity(spec.len());
    (0..spec.len())
        .into_par_iter()
        .map(|p| {
            let metric = HermitianMatrix { n, m: g.data[p] };
            let inv = metric.inverse();
            // G^{-1} V G^{-T}
            let mut inv_t = [[ZERO; 2]; 2];
            for i in 0..n {
                for j in 0..n {
                    inv_t[i][j] = inv.m[j][i];
                }
            }
            let w = mat_mul(n, &mat_mul(n, &inv.m, &h20[p]), &inv_t);
            let mut a = 0.0;
            for i in 0..n {
                for j in 0..n {
                    a += (h20[p][i][j].conj() * w[i][j]).re;
                }
            }
            let hm = HermitianMatrix { n, m: h11.data[p] };
            (a, metric.pairing(&hm, &hm), inv.quad(&gradient[p][..n]))
        })
        .collect::<Vec<_>>()
        .into_iter()
        .for_each(|(a, b, c)| {
            h20_norm.push(a);
            h11_norm.push(b);
            grad_norm.push(c);
        });
    Ok(CovariantHessians {
        h20,
        h11,
        gradient,
        h20_norm_sq: ScalarField::from_values(spec, h20_norm)?,
        h11_norm_sq: ScalarField::from_values(spec, h11_norm)?,
        gradient_norm_sq: ScalarField::from_values(spec, grad_norm)?,
    })
}

/// `sum conj(F_{ij}) (G^{-1} F G^{-T})_{ij}` for a symmetric `F`, with
/// `inv = G^{-1}`: the squared norm of a symmetric (2,0)-tensor.
pub(crate) fn symmetric_norm_sq(inv: &HermitianMatrix, f: &Block) -> f64 {
    let n = inv.n;
    let mut inv_t = [[ZERO; 2]; 2];
    for i in 0..n {
        for j in 0..n {
            inv_t[i][j] = inv.m[j][i];
        }
    }
    let w = mat_mul(n, &mat_mul(n, &inv.m, f), &inv_t);
    let mut a = 0.0;
    for i in 0..n {
        for j in 0..n {
            a += (f[i][j].conj() * w[i][j]).re;
        }
    }
    a
}

/// Twisted Ricci form `-i d dbar log det g - twist` and its trace.
pub fn ricci_and_scalar(
    grid: &Grid,
    g: &HermitianField,
    twist: &HermitianMatrix,
) -> Result<(HermitianField, ScalarField)> {
    let ld = log_det(g)?;
    let ric = grid.complex_hessian(&ld)?.map(|m| m.scale(-1.0) - *twist);
    let scalar = trace_pair(g, &ric)?;
    Ok((ric, scalar))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn trace_pair_examples() {
        let g = HermitianMatrix::diag(&[2.0, 1.0]);
        let ones = HermitianMatrix::from_upper(2, [[c(1.0, 0.0), c(1.0, 0.0)], [c(1.0, 0.0), c(1.0, 0.0)]]);
        assert!((g.trace_pair(&ones) - 1.5).abs() < 1e-15);
        assert!((g.trace_pair(&g) - 2.0).abs() < 1e-15);
        assert_eq!(g.trace_pair(&HermitianMatrix::zero(2)), 0.0);
    }

    #[test]
    fn log_det_examples() {
        let s = GridSpec::new(2, 8).unwrap();
        let ld = log_det(&HermitianField::constant(s, &HermitianMatrix::diag(&[2.0, 1.0]))).unwrap();
        assert!((ld.max() - 2f64.ln()).abs() < 1e-15);
        let ld = log_det(&HermitianField::constant(s, &HermitianMatrix::identity(2))).unwrap();
        assert_eq!(ld.sup_norm(), 0.0);
        let e = std::f64::consts::E;
        let ld = log_det(&HermitianField::constant(s, &HermitianMatrix::scalar(2, e))).unwrap();
        assert!((ld.max() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn positivity_error_names_worst_point() {
        let s = GridSpec::new(1, 8).unwrap();
        let g = HermitianField::from_fn(s, |i| {
            HermitianMatrix::scalar(1, if i == 9 { -3.0 } else if i == 4 { -1.0 } else { 1.0 })
        });
        match log_det(&g) {
            Err(Error::Positivity {
                index,
                min_eigenvalue,
                ..
            }) => {
                assert_eq!(index, 9);
                assert_eq!(min_eigenvalue, -3.0);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn wedge_ratio_examples() {
        let s = GridSpec::new(2, 8).unwrap();
        let id = HermitianField::constant(s, &HermitianMatrix::identity(2));
        let r = wedge_ratio(&id, &id).unwrap();
        assert!((r.max() - 1.0).abs() < 1e-15 && (r.min() - 1.0).abs() < 1e-15);
        let zero = HermitianField::zeros(s);
        assert_eq!(wedge_ratio(&id, &zero).unwrap().sup_norm(), 0.0);
        let w = HermitianField::constant(s, &HermitianMatrix::diag(&[2.0, 1.0]));
        let a = HermitianField::constant(s, &HermitianMatrix::diag(&[4.0, 0.0]));
        // (2*0 + 1*4) / (2*2) = 1
        assert!((wedge_ratio(&w, &a).unwrap().max() - 1.0).abs() < 1e-15);
        let s1 = GridSpec::new(1, 8).unwrap();
        let one = HermitianField::constant(s1, &HermitianMatrix::identity(1));
        assert!(matches!(wedge_ratio(&one, &one), Err(Error::UnsupportedDimension(1))));
    }

    #[test]
    fn christoffel_of_conformal_metric() {
        let s = GridSpec::new(1, 32).unwrap();
        let grid = Grid::new(s);
        let g = HermitianField::from_fn(s, |i| HermitianMatrix::scalar(1, s.coords(i)[0].cos().exp()));
        let gamma = christoffel(&grid, &g).unwrap();
        let mut err: f64 = 0.0;
        for p in 0..s.len() {
            let x = s.coords(p);
            err = err.max((gamma.get(p, 0, 0, 0) - c(-0.5 * x[0].sin(), 0.0)).norm());
        }
        assert!(err <= 1e-10, "{err}");
        assert!(gamma.is_symmetric());

        let flat = HermitianField::constant(s, &HermitianMatrix::scalar(1, 2.0));
        assert_eq!(christoffel(&grid, &flat).unwrap().sup_norm(), 0.0);
    }

    #[test]
    fn christoffel_symmetric_on_surface() {
        let s = GridSpec::new(2, 8).unwrap();
        let grid = Grid::new(s);
        let psi = ScalarField::from_fn(s, |x| 0.2 * (x[0] + x[3]).cos() + 0.1 * (x[1] - x[2]).sin());
        let g = grid.complex_hessian(&psi).unwrap().add_constant(&HermitianMatrix::identity(2));
        assert!(christoffel(&grid, &g).unwrap().is_symmetric());
    }

    #[test]
    fn covariant_hessians_flat() {
        let s = GridSpec::new(1, 16).unwrap();
        let grid = Grid::new(s);
        let g = HermitianField::constant(s, &HermitianMatrix::identity(1));
        let v = ScalarField::from_fn(s, |x| x[0].cos());
        let h = covariant_hessians(&grid, &g, &v).unwrap();
        assert!((h.h11_norm_sq.values()[0] - 0.0625).abs() < 1e-14);
        let expect = ScalarField::from_fn(s, |x| 0.25 * x[0].sin().powi(2));
        assert!(h.gradient_norm_sq.lin_comb(1.0, &expect, -1.0).sup_norm() < 1e-14);

        let h = covariant_hessians(&grid, &g, &ScalarField::constant(s, 2.0)).unwrap();
        assert_eq!(h.h20_norm_sq.sup_norm(), 0.0);
        assert_eq!(h.h11_norm_sq.sup_norm(), 0.0);
        assert_eq!(h.gradient_norm_sq.sup_norm(), 0.0);
    }

    #[test]
    fn ricci_examples() {
        let s = GridSpec::new(2, 8).unwrap();
        let grid = Grid::new(s);
        let g = HermitianField::constant(s, &HermitianMatrix::diag(&[2.0, 3.0]));
        let (ric, r) = ricci_and_scalar(&grid, &g, &HermitianMatrix::zero(2)).unwrap();
        assert_eq!(ric.sup_entry_norm(), 0.0);
        assert_eq!(r.sup_norm(), 0.0);

        let id = HermitianField::constant(s, &HermitianMatrix::identity(2));
        let (ric, r) = ricci_and_scalar(&grid, &id, &HermitianMatrix::identity(2)).unwrap();
        assert!((ric.at(0).get(0, 0).re + 1.0).abs() < 1e-15);
        assert!((r.max() + 2.0).abs() < 1e-15 && (r.min() + 2.0).abs() < 1e-15);

        let s1 = GridSpec::new(1, 32).unwrap();
        let grid1 = Grid::new(s1);
        let g = HermitianField::from_fn(s1, |i| HermitianMatrix::scalar(1, s1.coords(i)[0].cos().exp()));
        let (_, r) = ricci_and_scalar(&grid1, &g, &HermitianMatrix::zero(1)).unwrap();
        let exact = ScalarField::from_fn(s1, |x| 0.25 * x[0].cos() * (-x[0].cos()).exp());
        assert!(r.lin_comb(1.0, &exact, -1.0).sup_norm() <= 1e-9);
        assert!((r.values()[0] - 0.25 * (-1f64).exp()).abs() <= 1e-9);
    }

    #[test]
    fn from_parts_rejects_non_hermitian() {
        assert!(HermitianMatrix::from_parts(&[vec![1.0, 2.0], vec![0.0, 1.0]], &[]).is_err());
        let m = HermitianMatrix::from_parts(&[vec![1.0, 0.5], vec![0.5, 1.0]], &[vec![0.0, 0.2], vec![-0.2, 0.0]]).unwrap();
        assert_eq!(m.get(1, 0), c(0.5, -0.2));
    }
}
