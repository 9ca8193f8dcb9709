//! Pointwise algebra of small symmetric matrices.
//!
//! A [`SymMat`] stores the upper triangle of a 2x2 or 3x3 symmetric matrix,
//! so symmetry holds by construction. Matrix functions are defined through
//! the spectral decomposition `P = Q diag(l) Q^T` as `g(P) = Q diag(g(l)) Q^T`.

use crate::error::{Error, Result};

/// Number of stored upper-triangle entries for a `dim x dim` symmetric matrix.
pub const fn sym_len(dim: usize) -> usize {
    dim * (dim + 1) / 2
}

/// Position of entry `(i, j)` in upper-triangle row-major storage.
///
/// 2D order: xx, xy, yy. 3D order: xx, xy, xz, yy, yz, zz.
pub fn sym_index(dim: usize, i: usize, j: usize) -> usize {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    match dim {
        2 => [[0, 1], [1, 2]][i][j],
        3 => [[0, 1, 2], [1, 3, 4], [2, 4, 5]][i][j],
        _ => panic!("unsupported dimension {dim}"),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SymMat {
    dim: usize,
    a: [f64; 6],
}

impl SymMat {
    pub fn zeros(dim: usize) -> Self {
        assert!(dim == 2 || dim == 3, "SymMat dimension must be 2 or 3");
        SymMat { dim, a: [0.0; 6] }
    }

    pub fn identity(dim: usize) -> Self {
        Self::scalar(dim, 1.0)
    }

    pub fn scalar(dim: usize, value: f64) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.set(i, i, value);
        }
        m
    }

    pub fn diag(values: &[f64]) -> Self {
        let mut m = Self::zeros(values.len());
        for (i, &v) in values.iter().enumerate() {
            m.set(i, i, v);
        }
        m
    }

    /// Builds a matrix from its upper triangle in storage order.
    pub fn from_upper(dim: usize, upper: &[f64]) -> Self {
        let mut m = Self::zeros(dim);
        assert_eq!(upper.len(), sym_len(dim), "wrong number of upper-triangle entries");
        m.a[..upper.len()].copy_from_slice(upper);
        m
    }

    /// Symmetric part `(G + G^T) / 2` of a square matrix.
    pub fn sym_part(g: &SquareMat) -> Self {
        let d = g.dim;
        let mut m = Self::zeros(d);
        for i in 0..d {
            for j in i..d {
                m.set(i, j, 0.5 * (g.get(i, j) + g.get(j, i)));
            }
        }
        m
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn upper(&self) -> &[f64] {
        &self.a[..sym_len(self.dim)]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.a[sym_index(self.dim, i, j)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.a[sym_index(self.dim, i, j)] = value;
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    /// Double contraction `A : B = sum_ij A_ij B_ij`.
    pub fn ddot(&self, other: &SymMat) -> f64 {
        let d = self.dim;
        let mut s = 0.0;
        for i in 0..d {
            for j in 0..d {
                s += self.get(i, j) * other.get(i, j);
            }
        }
        s
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.ddot(self)
    }

    pub fn frobenius(&self) -> f64 {
        self.frobenius_sq().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.upper().iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn scale(&self, c: f64) -> Self {
        let mut m = *self;
        m.a.iter_mut().for_each(|v| *v *= c);
        m
    }

    pub fn add(&self, other: &SymMat) -> Self {
        let mut m = *self;
        m.a.iter_mut().zip(other.a.iter()).for_each(|(x, y)| *x += y);
        m
    }

    pub fn sub(&self, other: &SymMat) -> Self {
        self.add(&other.scale(-1.0))
    }

    pub fn to_square(&self) -> SquareMat {
        let mut s = SquareMat::zeros(self.dim);
        for i in 0..self.dim {
            for j in 0..self.dim {
                s.set(i, j, self.get(i, j));
            }
        }
        s
    }

    pub fn matmul(&self, other: &SymMat) -> SquareMat {
        self.to_square().mul(&other.to_square())
    }
}

/// Dense square matrix of dimension 2 or 3 (velocity gradients, eigenvector bases).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SquareMat {
    dim: usize,
    m: [[f64; 3]; 3],
}

impl SquareMat {
    pub fn zeros(dim: usize) -> Self {
        assert!(dim == 2 || dim == 3, "SquareMat dimension must be 2 or 3");
        SquareMat { dim, m: [[0.0; 3]; 3] }
    }

    pub fn identity(dim: usize) -> Self {
        let mut s = Self::zeros(dim);
        for i in 0..dim {
            s.m[i][i] = 1.0;
        }
        s
    }

    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let mut s = Self::zeros(rows.len());
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), rows.len());
            for (j, &v) in row.iter().enumerate() {
                s.m[i][j] = v;
            }
        }
        s
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.m[i][j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.m[i][j] = v;
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.m[i][i]).sum()
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.dim);
        for i in 0..self.dim {
            for j in 0..self.dim {
                t.m[i][j] = self.m[j][i];
            }
        }
        t
    }

    pub fn mul(&self, other: &SquareMat) -> Self {
        let d = self.dim;
        let mut p = Self::zeros(d);
        for i in 0..d {
            for j in 0..d {
                p.m[i][j] = (0..d).map(|k| self.m[i][k] * other.m[k][j]).sum();
            }
        }
        p
    }

    pub fn add(&self, other: &SquareMat) -> Self {
        let mut s = *self;
        for i in 0..self.dim {
            for j in 0..self.dim {
                s.m[i][j] += other.m[i][j];
            }
        }
        s
    }

    pub fn scale(&self, c: f64) -> Self {
        let mut s = *self;
        for row in s.m.iter_mut() {
            row.iter_mut().for_each(|v| *v *= c);
        }
        s
    }

    pub fn max_abs(&self) -> f64 {
        let mut mx = 0.0_f64;
        for i in 0..self.dim {
            for j in 0..self.dim {
                mx = mx.max(self.m[i][j].abs());
            }
        }
        mx
    }

    pub fn frobenius_sq(&self) -> f64 {
        let mut s = 0.0;
        for i in 0..self.dim {
            for j in 0..self.dim {
                s += self.m[i][j] * self.m[i][j];
            }
        }
        s
    }

    /// Column `j` as a vector.
    pub fn column(&self, j: usize) -> [f64; 3] {
        [self.m[0][j], self.m[1][j], self.m[2][j]]
    }
}

/// Eigenvalues (descending) and orthonormal eigenvectors (columns of `eigvecs`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralDecomp {
    pub dim: usize,
    pub eigvals: [f64; 3],
    pub eigvecs: SquareMat,
}

impl SpectralDecomp {
    pub fn values(&self) -> &[f64] {
        &self.eigvals[..self.dim]
    }

    /// `Q diag(f(l)) Q^T` for already-mapped eigenvalues.
    pub fn compose(&self, mapped: &[f64]) -> SymMat {
        let d = self.dim;
        let q = &self.eigvecs;
        let mut out = SymMat::zeros(d);
        for i in 0..d {
            for j in i..d {
                let v = (0..d).map(|k| q.get(i, k) * mapped[k] * q.get(j, k)).sum();
                out.set(i, j, v);
            }
        }
        out
    }

    pub fn reconstruct(&self) -> SymMat {
        self.compose(self.values())
    }
}

const JACOBI_TOL: f64 = 1e-13;
const JACOBI_MAX_SWEEPS: usize = 64;

/// Spectral decomposition of a symmetric matrix with eigenvalues sorted descending.
///
/// 2x2 uses the closed-form rotation angle; 3x3 uses cyclic Jacobi sweeps until
/// the off-diagonal norm drops below `1e-13` relative to the Frobenius norm.
pub fn eig_sym(p: &SymMat) -> SpectralDecomp {
    match p.dim {
        2 => eig_sym2(p),
        _ => eig_sym3(p),
    }
}

fn eig_sym2(p: &SymMat) -> SpectralDecomp {
    let (a, b, c) = (p.get(0, 0), p.get(0, 1), p.get(1, 1));
    let mean = 0.5 * (a + c);
    let rad = (0.5 * (a - c)).hypot(b);
    let theta = 0.5 * (2.0 * b).atan2(a - c);
    let (s, co) = theta.sin_cos();
    let q = SquareMat::from_rows(&[&[co, -s], &[s, co]]);
    SpectralDecomp {
        dim: 2,
        eigvals: [mean + rad, mean - rad, 0.0],
        eigvecs: q,
    }
}

fn eig_sym3(p: &SymMat) -> SpectralDecomp {
    let mut a = [[0.0; 3]; 3];
    for (i, row) in a.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = p.get(i, j);
        }
    }
    let mut v = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    let scale = p.frobenius().max(f64::MIN_POSITIVE);

    for _ in 0..JACOBI_MAX_SWEEPS {
        let off = (2.0 * (a[0][1] * a[0][1] + a[0][2] * a[0][2] + a[1][2] * a[1][2])).sqrt();
        if off <= JACOBI_TOL * scale {
            break;
        }
        for (pi, qi) in [(0usize, 1usize), (0, 2), (1, 2)] {
            let apq = a[pi][qi];
            if apq == 0.0 {
                continue;
            }
            let tau = (a[qi][qi] - a[pi][pi]) / (2.0 * apq);
            let t = tau.signum() / (tau.abs() + (1.0 + tau * tau).sqrt());
            let t = if tau == 0.0 { 1.0 } else { t };
            let c = 1.0 / (1.0 + t * t).sqrt();
            let s = t * c;
            for k in 0..3 {
                let akp = a[k][pi];
                let akq = a[k][qi];
                a[k][pi] = c * akp - s * akq;
                a[k][qi] = s * akp + c * akq;
            }
            for k in 0..3 {
                let apk = a[pi][k];
                let aqk = a[qi][k];
                a[pi][k] = c * apk - s * aqk;
                a[qi][k] = s * apk + c * aqk;
            }
            for row in v.iter_mut() {
                let vkp = row[pi];
                let vkq = row[qi];
                row[pi] = c * vkp - s * vkq;
                row[qi] = s * vkp + c * vkq;
            }
        }
    }

    let mut order = [0usize, 1, 2];
    order.sort_by(|&i, &j| a[j][j].total_cmp(&a[i][i]));
    let mut q = SquareMat::zeros(3);
    let mut vals = [0.0; 3];
    for (col, &src) in order.iter().enumerate() {
        vals[col] = a[src][src];
        for (row, vrow) in v.iter().enumerate() {
            q.set(row, col, vrow[src]);
        }
    }
    SpectralDecomp {
        dim: 3,
        eigvals: vals,
        eigvecs: q,
    }
}

/// `g(P) = Q g(D) Q^T`. Fails with [`Error::Domain`] if `g` is not finite at an eigenvalue.
pub fn apply_fn<F: Fn(f64) -> f64>(g: F, p: &SymMat) -> Result<SymMat> {
    let dec = eig_sym(p);
    let mut mapped = [0.0; 3];
    for (k, &l) in dec.values().iter().enumerate() {
        let v = g(l);
        if !v.is_finite() {
            return Err(Error::Domain(format!(
                "matrix function undefined at eigenvalue {l:e}"
            )));
        }
        mapped[k] = v;
    }
    Ok(dec.compose(&mapped[..p.dim]))
}

/// Principal logarithm of a symmetric positive definite matrix.
pub fn log_spd(p: &SymMat) -> Result<SymMat> {
    apply_fn(f64::ln, p)
}

pub fn exp_sym(p: &SymMat) -> SymMat {
    apply_fn(f64::exp, p).expect("exp is finite on finite eigenvalues")
}

/// Scalar cutoff `max(sigma, s)`.
#[inline]
pub fn chi(s: f64, sigma: f64) -> f64 {
    s.max(sigma)
}

/// Eigenvalue-wise cutoff `chi_sigma(P) = Q max(sigma, D) Q^T`.
///
/// Returns `P` itself when every eigenvalue already lies above `sigma`.
pub fn chi_sigma(p: &SymMat, sigma: f64) -> SymMat {
    let mut dec = eig_sym(p);
    if dec.values()[dec.dim - 1] >= sigma {
        return *p;
    }
    for l in dec.eigvals[..dec.dim].iter_mut() {
        *l = chi(*l, sigma);
    }
    dec.reconstruct()
}

/// Decomposition of `chi_sigma(P)`; its eigenvalues are floored at `sigma` exactly.
pub fn chi_sigma_decomp(p: &SymMat, sigma: f64) -> SpectralDecomp {
    let mut dec = eig_sym(p);
    for l in dec.eigvals[..dec.dim].iter_mut() {
        *l = chi(*l, sigma);
    }
    dec
}

/// Regularized logarithm with `G'(s) = 1 / chi_sigma(s)`.
#[inline]
pub fn g_sigma(s: f64, sigma: f64) -> f64 {
    if s >= sigma {
        s.ln()
    } else {
        s / sigma + sigma.ln() - 1.0
    }
}

/// `Tr G_sigma(P)`, the sum of [`g_sigma`] over the eigenvalues of `P`.
pub fn trace_g_sigma(p: &SymMat, sigma: f64) -> f64 {
    assert!(sigma > 0.0, "sigma must be positive");
    eig_sym(p).values().iter().map(|&l| g_sigma(l, sigma)).sum()
}

/// Deviatoric part `(G + G^T)/2 - tr(G)/N I` of a velocity gradient.
pub fn deviatoric(g: &SquareMat) -> SymMat {
    let d = g.dim;
    let mut out = SymMat::sym_part(g);
    let iso = g.trace() / d as f64;
    for i in 0..d {
        out.set(i, i, out.get(i, i) - iso);
    }
    out
}

pub fn min_eig(p: &SymMat) -> f64 {
    let dec = eig_sym(p);
    dec.values()[dec.dim - 1]
}

pub fn max_eig(p: &SymMat) -> f64 {
    eig_sym(p).eigvals[0]
}
