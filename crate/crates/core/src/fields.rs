//! Periodic grid fields with Fourier spectral differentiation.
//!
//! Data are stored row-major with axis 0 slowest: the point `(i0, i1[, i2])`
//! sits at `(i0 * n + i1) * n + i2`. Spectral coefficients are normalized so
//! that `f(x) = sum_k c_k exp(i k.x)`; the zero mode is the mean.

use std::borrow::Cow;
use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::tensor::{sym_index, sym_len, SquareMat, SymMat};

struct Plans {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    /// Signed integer mode per axis for every spectral index.
    modes: Vec<[i64; 3]>,
}

/// Uniform periodic grid on `[0, length)^dim`.
#[derive(Clone)]
pub struct Grid {
    dim: usize,
    n: usize,
    length: f64,
    plans: Arc<Plans>,
}

impl fmt::Debug for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid")
            .field("dim", &self.dim)
            .field("n", &self.n)
            .field("length", &self.length)
            .finish()
    }
}

impl PartialEq for Grid {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim && self.n == other.n && self.length == other.length
    }
}

impl Grid {
    /// `n` must be even and at least 8; `dim` is 2 or 3.
    pub fn new(dim: usize, n: usize, length: f64) -> Result<Self> {
        if dim != 2 && dim != 3 {
            return Err(Error::config("grid.dim", format!("must be 2 or 3, got {dim}")));
        }
        if n < 8 || n % 2 != 0 {
            return Err(Error::config("grid.n", format!("must be even and >= 8, got {n}")));
        }
        if !(length > 0.0 && length.is_finite()) {
            return Err(Error::config("grid.length", format!("must be positive, got {length}")));
        }
        let mut planner = FftPlanner::new();
        let total = n.pow(dim as u32);
        let signed = |j: usize| -> i64 {
            if j < n / 2 {
                j as i64
            } else {
                j as i64 - n as i64
            }
        };
        let modes = (0..total)
            .map(|idx| {
                let mut m = [0i64; 3];
                let mut rest = idx;
                for a in (0..dim).rev() {
                    m[a] = signed(rest % n);
                    rest /= n;
                }
                m
            })
            .collect();
        Ok(Grid {
            dim,
            n,
            length,
            plans: Arc::new(Plans {
                forward: planner.plan_fft_forward(n),
                inverse: planner.plan_fft_inverse(n),
                modes,
            }),
        })
    }

    /// Grid on the `(2 pi)^dim` torus.
    pub fn periodic(dim: usize, n: usize) -> Result<Self> {
        Self::new(dim, n, 2.0 * PI)
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn length(&self) -> f64 {
        self.length
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.plans.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self) -> f64 {
        self.length / self.n as f64
    }

    pub fn volume(&self) -> f64 {
        self.length.powi(self.dim as i32)
    }

    pub fn cell_volume(&self) -> f64 {
        self.volume() / self.len() as f64
    }

    /// Physical coordinates of grid point `idx` (unused axes are 0).
    pub fn coords(&self, idx: usize) -> [f64; 3] {
        let h = self.spacing();
        let mut x = [0.0; 3];
        let mut rest = idx;
        for a in (0..self.dim).rev() {
            x[a] = (rest % self.n) as f64 * h;
            rest /= self.n;
        }
        x
    }

    /// Signed integer modes of spectral index `idx`.
    #[inline]
    pub fn mode(&self, idx: usize) -> [i64; 3] {
        self.plans.modes[idx]
    }

    /// Wavevector of spectral index `idx`.
    #[inline]
    pub fn wavevector(&self, idx: usize) -> [f64; 3] {
        let s = 2.0 * PI / self.length;
        let m = self.mode(idx);
        [m[0] as f64 * s, m[1] as f64 * s, m[2] as f64 * s]
    }

    #[inline]
    pub fn wavenumber_sq(&self, idx: usize) -> f64 {
        let k = self.wavevector(idx);
        k[0] * k[0] + k[1] * k[1] + k[2] * k[2]
    }

    /// Multiplier for a first derivative along `axis`; Nyquist modes map to 0.
    #[inline]
    fn derivative_factor(&self, idx: usize, axis: usize) -> Complex64 {
        let m = self.mode(idx)[axis];
        if m.unsigned_abs() as usize == self.n / 2 {
            Complex64::new(0.0, 0.0)
        } else {
            Complex64::new(0.0, m as f64 * 2.0 * PI / self.length)
        }
    }

    /// Largest retained integer mode under the 2/3 rule: the largest `K` with `3K < n`,
    /// so a product of two retained fields never aliases back into a retained mode.
    pub fn dealias_cutoff(&self) -> usize {
        (self.n - 1) / 3
    }

    #[inline]
    pub fn is_retained(&self, idx: usize) -> bool {
        let c = self.dealias_cutoff() as u64;
        self.mode(idx)[..self.dim].iter().all(|m| m.unsigned_abs() <= c)
    }

    /// Spectral index of the mode with the given signed integers, if representable.
    pub fn index_of_mode(&self, mode: [i64; 3]) -> Option<usize> {
        let n = self.n as i64;
        let mut idx = 0usize;
        for &m in mode.iter().take(self.dim) {
            if m < -n / 2 || m >= n / 2 {
                return None;
            }
            idx = idx * self.n + m.rem_euclid(n) as usize;
        }
        Some(idx)
    }

    fn transform_in_place(&self, data: &mut [Complex64], inverse: bool) {
        let n = self.n;
        let total = data.len();
        let fft = if inverse { &self.plans.inverse } else { &self.plans.forward };
        fft.process(data);
        let mut scratch = vec![Complex64::new(0.0, 0.0); total];
        for axis in 0..self.dim - 1 {
            let stride = n.pow((self.dim - 1 - axis) as u32);
            let outer = total / (n * stride);
            let mut line = 0;
            for o in 0..outer {
                for i in 0..stride {
                    let base = o * n * stride + i;
                    for j in 0..n {
                        scratch[line * n + j] = data[base + j * stride];
                    }
                    line += 1;
                }
            }
            fft.process(&mut scratch);
            line = 0;
            for o in 0..outer {
                for i in 0..stride {
                    let base = o * n * stride + i;
                    for j in 0..n {
                        data[base + j * stride] = scratch[line * n + j];
                    }
                    line += 1;
                }
            }
        }
    }

    pub fn forward(&self, values: &[f64]) -> Vec<Complex64> {
        let mut data: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.transform_in_place(&mut data, false);
        let scale = 1.0 / self.len() as f64;
        data.iter_mut().for_each(|c| *c *= scale);
        data
    }

    pub fn inverse(&self, coeffs: &[Complex64]) -> Vec<f64> {
        let mut data = coeffs.to_vec();
        self.transform_in_place(&mut data, true);
        data.into_iter().map(|c| c.re).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Representation {
    Physical,
    Spectral,
}

#[derive(Debug, Clone, PartialEq)]
enum Data {
    Physical(Vec<f64>),
    Spectral(Vec<Complex64>),
}

/// Real scalar field held either as grid values or as Fourier coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: Grid,
    data: Data,
}

impl ScalarField {
    pub fn from_values(grid: &Grid, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), grid.len(), "value count does not match the grid");
        ScalarField {
            grid: grid.clone(),
            data: Data::Physical(values),
        }
    }

    pub fn from_coefficients(grid: &Grid, coeffs: Vec<Complex64>) -> Self {
        assert_eq!(coeffs.len(), grid.len(), "coefficient count does not match the grid");
        ScalarField {
            grid: grid.clone(),
            data: Data::Spectral(coeffs),
        }
    }

    pub fn constant(grid: &Grid, value: f64) -> Self {
        Self::from_values(grid, vec![value; grid.len()])
    }

    pub fn zeros(grid: &Grid) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn from_fn<F: Fn([f64; 3]) -> f64>(grid: &Grid, f: F) -> Self {
        let values = (0..grid.len()).map(|i| f(grid.coords(i))).collect();
        Self::from_values(grid, values)
    }

    #[inline]
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn representation(&self) -> Representation {
        match self.data {
            Data::Physical(_) => Representation::Physical,
            Data::Spectral(_) => Representation::Spectral,
        }
    }

    pub fn values(&self) -> Cow<'_, [f64]> {
        match &self.data {
            Data::Physical(v) => Cow::Borrowed(v),
            Data::Spectral(c) => Cow::Owned(self.grid.inverse(c)),
        }
    }

    pub fn coefficients(&self) -> Cow<'_, [Complex64]> {
        match &self.data {
            Data::Physical(v) => Cow::Owned(self.grid.forward(v)),
            Data::Spectral(c) => Cow::Borrowed(c),
        }
    }

    pub fn into_values(self) -> Vec<f64> {
        match self.data {
            Data::Physical(v) => v,
            Data::Spectral(c) => self.grid.inverse(&c),
        }
    }

    pub fn into_coefficients(self) -> Vec<Complex64> {
        match self.data {
            Data::Physical(v) => self.grid.forward(&v),
            Data::Spectral(c) => c,
        }
    }

    pub fn transform(&self, target: Representation) -> ScalarField {
        match target {
            Representation::Physical => Self::from_values(&self.grid, self.values().into_owned()),
            Representation::Spectral => Self::from_coefficients(&self.grid, self.coefficients().into_owned()),
        }
    }

    pub fn to_physical(self) -> ScalarField {
        let grid = self.grid.clone();
        Self::from_values(&grid, self.into_values())
    }

    pub fn to_spectral(self) -> ScalarField {
        let grid = self.grid.clone();
        Self::from_coefficients(&grid, self.into_coefficients())
    }

    /// Pointwise map in physical space.
    pub fn map<F: Fn(f64) -> f64>(&self, f: F) -> ScalarField {
        Self::from_values(&self.grid, self.values().iter().map(|&v| f(v)).collect())
    }

    pub fn zip_map<F: Fn(f64, f64) -> f64>(&self, other: &ScalarField, f: F) -> ScalarField {
        let a = self.values();
        let b = other.values();
        Self::from_values(&self.grid, a.iter().zip(b.iter()).map(|(&x, &y)| f(x, y)).collect())
    }

    /// Spectral multiplier `c_k -> m(idx) c_k`.
    pub fn spectral_map<F: Fn(usize, Complex64) -> Complex64>(&self, f: F) -> ScalarField {
        let c = self.coefficients();
        Self::from_coefficients(&self.grid, c.iter().enumerate().map(|(i, &v)| f(i, v)).collect())
    }

    pub fn scale(&self, c: f64) -> ScalarField {
        match &self.data {
            Data::Physical(v) => Self::from_values(&self.grid, v.iter().map(|x| x * c).collect()),
            Data::Spectral(s) => Self::from_coefficients(&self.grid, s.iter().map(|x| x * c).collect()),
        }
    }

    pub fn add(&self, other: &ScalarField) -> ScalarField {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &ScalarField) -> ScalarField {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &ScalarField) -> ScalarField {
        self.zip_map(other, |a, b| a * b)
    }

    pub fn min(&self) -> f64 {
        self.values().iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values().iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.values().iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn integrate(&self) -> f64 {
        integrate(self)
    }
}

/// Vector field with `dim` scalar components.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    pub comps: Vec<ScalarField>,
}

impl VectorField {
    pub fn zeros(grid: &Grid) -> Self {
        VectorField {
            comps: (0..grid.dim()).map(|_| ScalarField::zeros(grid)).collect(),
        }
    }

    pub fn from_fn<F: Fn([f64; 3]) -> [f64; 3]>(grid: &Grid, f: F) -> Self {
        let pts: Vec<[f64; 3]> = (0..grid.len()).map(|i| f(grid.coords(i))).collect();
        VectorField {
            comps: (0..grid.dim())
                .map(|a| ScalarField::from_values(grid, pts.iter().map(|p| p[a]).collect()))
                .collect(),
        }
    }

    pub fn grid(&self) -> &Grid {
        self.comps[0].grid()
    }

    pub fn dim(&self) -> usize {
        self.comps.len()
    }

    pub fn scale(&self, c: f64) -> Self {
        VectorField {
            comps: self.comps.iter().map(|f| f.scale(c)).collect(),
        }
    }

    pub fn add(&self, other: &VectorField) -> Self {
        VectorField {
            comps: self.comps.iter().zip(&other.comps).map(|(a, b)| a.add(b)).collect(),
        }
    }

    pub fn sub(&self, other: &VectorField) -> Self {
        VectorField {
            comps: self.comps.iter().zip(&other.comps).map(|(a, b)| a.sub(b)).collect(),
        }
    }

    pub fn to_physical(self) -> Self {
        VectorField {
            comps: self.comps.into_iter().map(ScalarField::to_physical).collect(),
        }
    }

    /// Pointwise Euclidean magnitude.
    pub fn magnitude(&self) -> ScalarField {
        let vals: Vec<Cow<[f64]>> = self.comps.iter().map(|c| c.values()).collect();
        let grid = self.grid();
        ScalarField::from_values(
            grid,
            (0..grid.len())
                .map(|i| vals.iter().map(|v| v[i] * v[i]).sum::<f64>().sqrt())
                .collect(),
        )
    }

    pub fn max_abs(&self) -> f64 {
        self.magnitude().max()
    }
}

/// Symmetric tensor field storing the upper triangle (see [`sym_index`]).
#[derive(Debug, Clone, PartialEq)]
pub struct SymTensorField {
    pub comps: Vec<ScalarField>,
}

impl SymTensorField {
    pub fn zeros(grid: &Grid) -> Self {
        SymTensorField {
            comps: (0..sym_len(grid.dim())).map(|_| ScalarField::zeros(grid)).collect(),
        }
    }

    /// `value * I` everywhere.
    pub fn scalar(grid: &Grid, value: f64) -> Self {
        Self::from_points(grid, vec![SymMat::scalar(grid.dim(), value); grid.len()])
    }

    pub fn from_fn<F: Fn([f64; 3]) -> SymMat>(grid: &Grid, f: F) -> Self {
        Self::from_points(grid, (0..grid.len()).map(|i| f(grid.coords(i))).collect())
    }

    pub fn from_points(grid: &Grid, pts: Vec<SymMat>) -> Self {
        let d = grid.dim();
        SymTensorField {
            comps: (0..sym_len(d))
                .map(|c| ScalarField::from_values(grid, pts.iter().map(|m| m.upper()[c]).collect()))
                .collect(),
        }
    }

    pub fn grid(&self) -> &Grid {
        self.comps[0].grid()
    }

    pub fn dim(&self) -> usize {
        self.grid().dim()
    }

    pub fn component(&self, i: usize, j: usize) -> &ScalarField {
        &self.comps[sym_index(self.dim(), i, j)]
    }

    /// Matrix values at every grid point.
    pub fn points(&self) -> Vec<SymMat> {
        let d = self.dim();
        let vals: Vec<Cow<[f64]>> = self.comps.iter().map(|c| c.values()).collect();
        let mut buf = [0.0; 6];
        (0..self.grid().len())
            .map(|i| {
                for (c, v) in vals.iter().enumerate() {
                    buf[c] = v[i];
                }
                SymMat::from_upper(d, &buf[..sym_len(d)])
            })
            .collect()
    }

    pub fn scale(&self, c: f64) -> Self {
        SymTensorField {
            comps: self.comps.iter().map(|f| f.scale(c)).collect(),
        }
    }

    pub fn add(&self, other: &SymTensorField) -> Self {
        SymTensorField {
            comps: self.comps.iter().zip(&other.comps).map(|(a, b)| a.add(b)).collect(),
        }
    }

    pub fn sub(&self, other: &SymTensorField) -> Self {
        SymTensorField {
            comps: self.comps.iter().zip(&other.comps).map(|(a, b)| a.sub(b)).collect(),
        }
    }

    pub fn to_physical(self) -> Self {
        SymTensorField {
            comps: self.comps.into_iter().map(ScalarField::to_physical).collect(),
        }
    }

    pub fn trace(&self) -> ScalarField {
        let d = self.dim();
        let mut t = self.component(0, 0).clone();
        for i in 1..d {
            t = t.add(self.component(i, i));
        }
        t
    }

    /// Pointwise Frobenius norm.
    pub fn frobenius(&self) -> ScalarField {
        let grid = self.grid().clone();
        ScalarField::from_values(&grid, self.points().iter().map(|m| m.frobenius()).collect())
    }
}

/// Full (not necessarily symmetric) matrix field, e.g. a velocity gradient.
/// Component `(i, j)` lives at `comps[i * dim + j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixField {
    pub comps: Vec<ScalarField>,
}

impl MatrixField {
    pub fn dim(&self) -> usize {
        self.comps[0].grid().dim()
    }

    pub fn grid(&self) -> &Grid {
        self.comps[0].grid()
    }

    pub fn component(&self, i: usize, j: usize) -> &ScalarField {
        &self.comps[i * self.dim() + j]
    }

    pub fn points(&self) -> Vec<SquareMat> {
        let d = self.dim();
        let vals: Vec<Cow<[f64]>> = self.comps.iter().map(|c| c.values()).collect();
        (0..self.grid().len())
            .map(|p| {
                let mut m = SquareMat::zeros(d);
                for i in 0..d {
                    for j in 0..d {
                        m.set(i, j, vals[i * d + j][p]);
                    }
                }
                m
            })
            .collect()
    }
}

/// Partial derivative along `axis`, returned in spectral form.
pub fn partial(f: &ScalarField, axis: usize) -> ScalarField {
    let g = f.grid().clone();
    f.spectral_map(|i, c| c * g.derivative_factor(i, axis))
}

pub fn gradient(f: &ScalarField) -> VectorField {
    VectorField {
        comps: (0..f.grid().dim()).map(|a| partial(f, a).to_physical()).collect(),
    }
}

pub fn divergence(v: &VectorField) -> ScalarField {
    let grid = v.grid().clone();
    let coeffs: Vec<Cow<[Complex64]>> = v.comps.iter().map(|c| c.coefficients()).collect();
    let out = (0..grid.len())
        .map(|i| {
            (0..grid.dim())
                .map(|a| coeffs[a][i] * grid.derivative_factor(i, a))
                .sum()
        })
        .collect();
    ScalarField::from_coefficients(&grid, out).to_physical()
}

pub fn laplacian(f: &ScalarField) -> ScalarField {
    let g = f.grid().clone();
    f.spectral_map(|i, c| c * (-g.wavenumber_sq(i))).to_physical()
}

/// `(grad v)_{ij} = d v_i / d x_j`.
pub fn vector_gradient(v: &VectorField) -> MatrixField {
    let d = v.dim();
    let mut comps = Vec::with_capacity(d * d);
    for i in 0..d {
        for j in 0..d {
            comps.push(partial(&v.comps[i], j).to_physical());
        }
    }
    MatrixField { comps }
}

/// Row-wise divergence `(Div T)_i = sum_j d T_ij / d x_j`.
pub fn tensor_divergence(t: &SymTensorField) -> VectorField {
    let d = t.dim();
    VectorField {
        comps: (0..d)
            .map(|i| {
                divergence(&VectorField {
                    comps: (0..d).map(|j| t.component(i, j).clone()).collect(),
                })
            })
            .collect(),
    }
}

/// Row-wise divergence of a full matrix field.
pub fn matrix_divergence(m: &MatrixField) -> VectorField {
    let d = m.dim();
    VectorField {
        comps: (0..d)
            .map(|i| {
                divergence(&VectorField {
                    comps: (0..d).map(|j| m.component(i, j).clone()).collect(),
                })
            })
            .collect(),
    }
}

/// Field of any rank, for the generic [`differentiate`] entry point.
#[derive(Debug, Clone, PartialEq)]
pub enum Field {
    Scalar(ScalarField),
    Vector(VectorField),
    SymTensor(SymTensorField),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiffKind {
    Gradient,
    Divergence,
    Laplacian,
    TensorDivergence,
}

pub fn differentiate(field: &Field, kind: DiffKind) -> Result<Field> {
    match (field, kind) {
        (Field::Scalar(f), DiffKind::Gradient) => Ok(Field::Vector(gradient(f))),
        (Field::Scalar(f), DiffKind::Laplacian) => Ok(Field::Scalar(laplacian(f))),
        (Field::Vector(v), DiffKind::Divergence) => Ok(Field::Scalar(divergence(v))),
        (Field::Vector(v), DiffKind::Laplacian) => Ok(Field::Vector(VectorField {
            comps: v.comps.iter().map(laplacian).collect(),
        })),
        (Field::SymTensor(t), DiffKind::TensorDivergence) => Ok(Field::Vector(tensor_divergence(t))),
        (Field::SymTensor(t), DiffKind::Laplacian) => Ok(Field::SymTensor(SymTensorField {
            comps: t.comps.iter().map(laplacian).collect(),
        })),
        (f, k) => Err(Error::Domain(format!(
            "{k:?} is not defined for a {} field",
            match f {
                Field::Scalar(_) => "scalar",
                Field::Vector(_) => "vector",
                Field::SymTensor(_) => "symmetric tensor",
            }
        ))),
    }
}

/// 2/3-rule truncation: zeroes every mode with a component above [`Grid::dealias_cutoff`].
pub fn dealias(f: &ScalarField) -> ScalarField {
    let g = f.grid().clone();
    f.spectral_map(|i, c| if g.is_retained(i) { c } else { Complex64::new(0.0, 0.0) })
}

/// Dealiased product of two fields, returned in physical form.
pub fn mul_dealiased(a: &ScalarField, b: &ScalarField) -> ScalarField {
    dealias(&a.mul(b)).to_physical()
}

pub fn dealias_vector(v: &VectorField) -> VectorField {
    VectorField {
        comps: v.comps.iter().map(|c| dealias(c).to_physical()).collect(),
    }
}

pub fn dealias_tensor(t: &SymTensorField) -> SymTensorField {
    SymTensorField {
        comps: t.comps.iter().map(|c| dealias(c).to_physical()).collect(),
    }
}

/// `int f dx`, exact for trigonometric polynomials resolved by the grid.
pub fn integrate(f: &ScalarField) -> f64 {
    let vol = f.grid().cell_volume();
    match &f.data {
        Data::Physical(v) => v.iter().sum::<f64>() * vol,
        Data::Spectral(c) => c[0].re * f.grid().volume(),
    }
}

fn lp_of_magnitudes(grid: &Grid, mags: &[f64], p: f64) -> f64 {
    if p.is_infinite() {
        return mags.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    }
    (mags.iter().map(|m| m.abs().powf(p)).sum::<f64>() * grid.cell_volume()).powf(1.0 / p)
}

/// `L^p` norm by grid quadrature, `p` in `[1, inf]`.
pub fn lp_norm(f: &ScalarField, p: f64) -> f64 {
    assert!(p >= 1.0, "p must be at least 1");
    lp_of_magnitudes(f.grid(), &f.values(), p)
}

pub fn lp_norm_vector(v: &VectorField, p: f64) -> f64 {
    lp_norm(&v.magnitude(), p)
}

/// `L^p` norm of the pointwise Frobenius norm.
pub fn lp_norm_tensor(t: &SymTensorField, p: f64) -> f64 {
    lp_norm(&t.frobenius(), p)
}

pub fn lp_norm_matrix(m: &MatrixField, p: f64) -> f64 {
    let grid = m.grid();
    let mags: Vec<f64> = m.points().iter().map(|g| g.frobenius_sq().sqrt()).collect();
    lp_of_magnitudes(grid, &mags, p)
}

/// Gaussian spectral filter `exp(-theta^2 |k|^2 / 2)` standing in for a mollifier of width `theta`.
pub fn mollify(f: &ScalarField, theta: f64) -> ScalarField {
    if theta == 0.0 {
        return f.clone();
    }
    let g = f.grid().clone();
    f.spectral_map(|i, c| c * (-0.5 * theta * theta * g.wavenumber_sq(i)).exp())
        .to_physical()
}

/// Spectral interpolation/restriction onto another grid of the same dimension and period.
///
/// Modes are copied when representable on both grids; Nyquist modes are dropped.
pub fn resample(f: &ScalarField, target: &Grid) -> Result<ScalarField> {
    let src = f.grid();
    if src.dim() != target.dim() || src.length() != target.length() {
        return Err(Error::GridMismatch(format!("cannot resample {src:?} onto {target:?}")));
    }
    let c = f.coefficients();
    let mut out = vec![Complex64::new(0.0, 0.0); target.len()];
    let limit = (src.n().min(target.n()) / 2) as u64;
    for (i, &v) in c.iter().enumerate() {
        let m = src.mode(i);
        if m[..src.dim()].iter().any(|x| x.unsigned_abs() >= limit) {
            continue;
        }
        if let Some(j) = target.index_of_mode(m) {
            out[j] = v;
        }
    }
    Ok(ScalarField::from_coefficients(target, out).to_physical())
}

/// Deterministic random band-limited field with spectrum decaying like `|k|^-decay`.
///
/// The mean is zero unless `floor` is given, in which case the field is shifted so
/// that its minimum equals `floor`.
pub fn random_smooth_field(grid: &Grid, seed: u64, decay: f64, amplitude: f64, floor: Option<f64>) -> ScalarField {
    assert!(decay > 1.0, "decay rate must exceed 1");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut coeffs = vec![Complex64::new(0.0, 0.0); grid.len()];
    for i in 0..grid.len() {
        let m = grid.mode(i);
        if !grid.is_retained(i) || m == [0, 0, 0] {
            continue;
        }
        let neg = [-m[0], -m[1], -m[2]];
        let j = grid.index_of_mode(neg).expect("retained modes are symmetric");
        if j < i {
            continue;
        }
        let kmag = (m.iter().map(|x| (x * x) as f64).sum::<f64>()).sqrt();
        let env = amplitude * kmag.powf(-decay);
        let (re, im): (f64, f64) = (rng.sample(StandardNormal), rng.sample(StandardNormal));
        let c = Complex64::new(re, im) * env;
        if i == j {
            coeffs[i] = Complex64::new(c.re, 0.0);
        } else {
            coeffs[i] = c;
            coeffs[j] = c.conj();
        }
    }
    let field = ScalarField::from_coefficients(grid, coeffs).to_physical();
    match floor {
        Some(fl) => {
            let m = field.min();
            field.map(|v| v - m + fl)
        }
        None => field,
    }
}
