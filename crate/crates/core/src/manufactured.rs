//! Manufactured solutions: fixed trigonometric fields with analytically evaluated
//! source terms, independent of the spectral machinery.
//!
//! Sources are built from forward-mode dual numbers carrying a spatial gradient,
//! so nonlinear fluxes such as `div S(grad u)` are differentiated exactly.

use std::ops::{Add, Div, Mul, Neg, Sub};

use crate::constitutive::ModelParams;
use crate::dynamics::{Forcing, Sources, State};
use crate::error::Result;
use crate::fields::{Grid, ScalarField, SymTensorField, VectorField};
use crate::tensor::{sym_index, sym_len, SymMat};

/// First-order dual number: a value and its spatial gradient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dual {
    pub v: f64,
    pub g: [f64; 3],
}

impl Dual {
    pub fn constant(v: f64) -> Self {
        Dual { v, g: [0.0; 3] }
    }

    fn chain(self, f: f64, df: f64) -> Self {
        Dual {
            v: f,
            g: [df * self.g[0], df * self.g[1], df * self.g[2]],
        }
    }

    pub fn powf(self, p: f64) -> Self {
        self.chain(self.v.powf(p), p * self.v.powf(p - 1.0))
    }

    pub fn recip(self) -> Self {
        self.chain(1.0 / self.v, -1.0 / (self.v * self.v))
    }
}

impl Add for Dual {
    type Output = Dual;
    fn add(self, o: Dual) -> Dual {
        Dual {
            v: self.v + o.v,
            g: [self.g[0] + o.g[0], self.g[1] + o.g[1], self.g[2] + o.g[2]],
        }
    }
}

impl Sub for Dual {
    type Output = Dual;
    fn sub(self, o: Dual) -> Dual {
        self + (-o)
    }
}

impl Neg for Dual {
    type Output = Dual;
    fn neg(self) -> Dual {
        Dual {
            v: -self.v,
            g: [-self.g[0], -self.g[1], -self.g[2]],
        }
    }
}

impl Mul for Dual {
    type Output = Dual;
    fn mul(self, o: Dual) -> Dual {
        Dual {
            v: self.v * o.v,
            g: [
                self.g[0] * o.v + self.v * o.g[0],
                self.g[1] * o.v + self.v * o.g[1],
                self.g[2] * o.v + self.v * o.g[2],
            ],
        }
    }
}

impl Mul<f64> for Dual {
    type Output = Dual;
    fn mul(self, c: f64) -> Dual {
        Dual {
            v: self.v * c,
            g: [self.g[0] * c, self.g[1] * c, self.g[2] * c],
        }
    }
}

impl Add<f64> for Dual {
    type Output = Dual;
    fn add(self, c: f64) -> Dual {
        Dual { v: self.v + c, g: self.g }
    }
}

impl Div for Dual {
    type Output = Dual;
    fn div(self, o: Dual) -> Dual {
        self * o.recip()
    }
}

/// One term `amp (1 + tamp sin(omega t)) cos(k.x + phase)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrigTerm {
    pub amp: f64,
    pub k: [f64; 3],
    pub phase: f64,
    pub tamp: f64,
    pub omega: f64,
}

impl TrigTerm {
    pub const fn new(amp: f64, k: [f64; 3], phase: f64, tamp: f64, omega: f64) -> Self {
        TrigTerm {
            amp,
            k,
            phase,
            tamp,
            omega,
        }
    }

    fn envelope(&self, t: f64) -> (f64, f64) {
        (
            self.amp * (1.0 + self.tamp * (self.omega * t).sin()),
            self.amp * self.tamp * self.omega * (self.omega * t).cos(),
        )
    }

    fn arg(&self, x: [f64; 3]) -> f64 {
        self.k[0] * x[0] + self.k[1] * x[1] + self.k[2] * x[2] + self.phase
    }
}

/// `offset + sum of TrigTerm`s, with exact value, gradient, Hessian and time derivative.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrigField {
    pub offset: f64,
    pub terms: Vec<TrigTerm>,
}

impl TrigField {
    pub fn new(offset: f64, terms: Vec<TrigTerm>) -> Self {
        TrigField { offset, terms }
    }

    pub fn value(&self, x: [f64; 3], t: f64) -> f64 {
        self.offset + self.terms.iter().map(|m| m.envelope(t).0 * m.arg(x).cos()).sum::<f64>()
    }

    pub fn time_derivative(&self, x: [f64; 3], t: f64) -> f64 {
        self.terms.iter().map(|m| m.envelope(t).1 * m.arg(x).cos()).sum()
    }

    pub fn gradient(&self, x: [f64; 3], t: f64) -> [f64; 3] {
        let mut g = [0.0; 3];
        for m in &self.terms {
            let s = -m.envelope(t).0 * m.arg(x).sin();
            for (a, ga) in g.iter_mut().enumerate() {
                *ga += s * m.k[a];
            }
        }
        g
    }

    pub fn hessian(&self, x: [f64; 3], t: f64) -> [[f64; 3]; 3] {
        let mut h = [[0.0; 3]; 3];
        for m in &self.terms {
            let c = -m.envelope(t).0 * m.arg(x).cos();
            for (a, row) in h.iter_mut().enumerate() {
                for (b, hab) in row.iter_mut().enumerate() {
                    *hab += c * m.k[a] * m.k[b];
                }
            }
        }
        h
    }

    pub fn laplacian(&self, x: [f64; 3], t: f64) -> f64 {
        let h = self.hessian(x, t);
        h[0][0] + h[1][1] + h[2][2]
    }

    pub fn dual(&self, x: [f64; 3], t: f64) -> Dual {
        Dual {
            v: self.value(x, t),
            g: self.gradient(x, t),
        }
    }

    /// `d f / d x_j` as a dual number.
    pub fn partial_dual(&self, j: usize, x: [f64; 3], t: f64) -> Dual {
        let h = self.hessian(x, t);
        Dual {
            v: self.gradient(x, t)[j],
            g: h[j],
        }
    }

    pub fn sample(&self, grid: &Grid, t: f64) -> ScalarField {
        ScalarField::from_fn(grid, |x| self.value(x, t))
    }
}

/// Pointwise source values of all four equations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointSources {
    pub rho: f64,
    pub u: [f64; 3],
    pub eta: f64,
    pub stress: SymMat,
}

/// A manufactured solution `(rho, u, eta, T)` together with the sources that make it exact.
///
/// Supports `alpha = 0` and either `sigma = 0` or stress fields whose eigenvalues stay above `sigma`.
#[derive(Debug, Clone, PartialEq)]
pub struct Manufactured {
    pub dim: usize,
    pub rho: TrigField,
    pub u: Vec<TrigField>,
    pub eta: TrigField,
    /// Upper-triangle components, see [`sym_index`].
    pub stress: Vec<TrigField>,
    pub params: ModelParams,
}

impl Manufactured {
    /// Fixed smooth fields with `|div u| <= 0.5`, `rho, eta >= 0.7` and SPD stress.
    pub fn standard(dim: usize, params: &ModelParams) -> Self {
        let t = TrigTerm::new;
        let mut rho = TrigField::new(
            1.0,
            vec![t(0.1, [1.0, 1.0, 0.0], 0.3, 0.5, 1.0), t(0.08, [1.0, -2.0, 0.0], 1.1, 0.3, 2.0)],
        );
        let mut u = vec![
            TrigField::new(0.0, vec![t(0.1, [0.0, 1.0, 0.0], 0.2, 0.5, 1.0), t(0.05, [2.0, 1.0, 0.0], 0.7, 0.2, 1.5)]),
            TrigField::new(0.0, vec![t(0.1, [1.0, 0.0, 0.0], -0.4, 0.5, 1.0), t(0.04, [1.0, -1.0, 0.0], 0.1, 0.3, 2.0)]),
        ];
        let mut eta = TrigField::new(
            1.0,
            vec![t(0.1, [2.0, 0.0, 0.0], 0.5, 0.4, 1.0), t(0.05, [1.0, 1.0, 0.0], -0.3, 0.2, 1.0)],
        );
        let kbar = params.k;
        let mut stress = vec![TrigField::default(); sym_len(dim)];
        stress[sym_index(dim, 0, 0)] = TrigField::new(kbar, vec![t(0.1, [1.0, 0.0, 0.0], 0.2, 0.3, 1.0)]);
        stress[sym_index(dim, 0, 1)] = TrigField::new(0.0, vec![t(0.05, [1.0, 1.0, 0.0], 0.6, 0.2, 1.0)]);
        stress[sym_index(dim, 1, 1)] = TrigField::new(kbar, vec![t(0.1, [0.0, 1.0, 0.0], -0.5, 0.3, 1.0)]);
        if dim == 3 {
            rho.terms.push(t(0.05, [0.0, 1.0, 1.0], 0.4, 0.2, 1.0));
            eta.terms.push(t(0.05, [1.0, 0.0, -1.0], 0.9, 0.2, 1.0));
            u[0].terms.push(t(0.03, [0.0, 0.0, 1.0], 0.5, 0.2, 1.0));
            u.push(TrigField::new(0.0, vec![t(0.08, [1.0, 0.0, 1.0], 0.3, 0.4, 1.0)]));
            stress[sym_index(3, 0, 2)] = TrigField::new(0.0, vec![t(0.04, [0.0, 1.0, 1.0], 0.1, 0.2, 1.0)]);
            stress[sym_index(3, 1, 2)] = TrigField::new(0.0, vec![t(0.04, [1.0, 0.0, 1.0], -0.2, 0.2, 1.0)]);
            stress[sym_index(3, 2, 2)] = TrigField::new(kbar, vec![t(0.1, [0.0, 0.0, 1.0], 0.7, 0.3, 1.0)]);
        }
        Manufactured {
            dim,
            rho,
            u,
            eta,
            stress,
            params: params.clone(),
        }
    }

    pub fn state(&self, grid: &Grid, t: f64) -> Result<State> {
        let d = self.dim;
        let stress = SymTensorField {
            comps: self.stress.iter().map(|f| f.sample(grid, t)).collect(),
        };
        debug_assert_eq!(stress.comps.len(), sym_len(d));
        State::new(
            t,
            self.rho.sample(grid, t),
            VectorField {
                comps: self.u.iter().map(|f| f.sample(grid, t)).collect(),
            },
            self.eta.sample(grid, t),
            stress,
            self.params.clone(),
        )
    }

    /// Exact velocity gradient `G_ij = d u_i / d x_j` as duals.
    fn grad_u(&self, x: [f64; 3], t: f64) -> [[Dual; 3]; 3] {
        let mut g = [[Dual::constant(0.0); 3]; 3];
        for i in 0..self.dim {
            for j in 0..self.dim {
                g[i][j] = self.u[i].partial_dual(j, x, t);
            }
        }
        g
    }

    fn stress_comp(&self, i: usize, j: usize) -> &TrigField {
        &self.stress[sym_index(self.dim, i, j)]
    }

    /// Sources at one point and time.
    pub fn sources_at(&self, x: [f64; 3], t: f64) -> PointSources {
        let d = self.dim;
        let p = &self.params;
        let rho = self.rho.dual(x, t);
        let eta = self.eta.dual(x, t);
        let u: Vec<Dual> = self.u.iter().map(|f| f.dual(x, t)).collect();
        let rho_t = self.rho.time_derivative(x, t);
        let eta_t = self.eta.time_derivative(x, t);

        let mut src_rho = rho_t;
        let mut src_eta = eta_t - p.epsilon * self.eta.laplacian(x, t);
        for (k, uk) in u.iter().enumerate() {
            src_rho += (rho * *uk).g[k];
            src_eta += (eta * *uk).g[k];
        }

        // stress equation
        let g = self.grad_u(x, t);
        let mut tm = SymMat::zeros(d);
        for i in 0..d {
            for j in i..d {
                tm.set(i, j, self.stress_comp(i, j).value(x, t));
            }
        }
        let mut src_t = SymMat::zeros(d);
        for i in 0..d {
            for j in i..d {
                let f = self.stress_comp(i, j);
                let tij = f.dual(x, t);
                let mut s = f.time_derivative(x, t) - p.epsilon * f.laplacian(x, t);
                for (k, uk) in u.iter().enumerate() {
                    s += (*uk * tij).g[k];
                    s -= g[i][k].v * tm.get(k, j) + tm.get(i, k) * g[j][k].v;
                }
                if i == j {
                    s -= p.k / (2.0 * p.lambda) * (eta.v + p.alpha);
                }
                s += tm.get(i, j) / (2.0 * p.lambda);
                src_t.set(i, j, s);
            }
        }

        // momentum equation in conservative form
        let divu = (0..d).fold(Dual::constant(0.0), |acc, i| acc + g[i][i]);
        let mut dd = [[Dual::constant(0.0); 3]; 3];
        let mut norm_sq = Dual::constant(0.0);
        for i in 0..d {
            for j in 0..d {
                let mut e = (g[i][j] + g[j][i]) * 0.5;
                if i == j {
                    e = e - divu * (1.0 / d as f64);
                }
                dd[i][j] = e;
                norm_sq = norm_sq + e * e;
            }
        }
        let coef = (norm_sq + 1.0).powf(0.5 * (p.r - 2.0)) * (2.0 * p.mu0);
        let b2 = p.b * p.b;
        let lam_prime = divu * 2.0 / (Dual::constant(1.0) - divu * divu * b2);
        let pressure = rho.powf(p.gamma) * p.a;
        let q = eta * (p.k * p.ell) + eta * eta * p.zeta;
        let mut src_u = [0.0; 3];
        for i in 0..d {
            let ui = u[i];
            let mut s = rho_t * ui.v + rho.v * self.u[i].time_derivative(x, t);
            for (j, uj) in u.iter().enumerate() {
                s += (rho * ui * *uj).g[j];
                let mut sij = dd[i][j] * coef;
                if i == j {
                    sij = sij + lam_prime;
                }
                s -= sij.g[j];
                s -= self.stress_comp(i, j).gradient(x, t)[j];
            }
            s += pressure.g[i] + q.g[i];
            src_u[i] = s;
        }

        PointSources {
            rho: src_rho,
            u: src_u,
            eta: src_eta,
            stress: src_t,
        }
    }
}

impl Forcing for Manufactured {
    fn sources(&self, grid: &Grid, time: f64) -> Option<Sources> {
        let pts: Vec<PointSources> = (0..grid.len()).map(|i| self.sources_at(grid.coords(i), time)).collect();
        let d = grid.dim();
        Some(Sources {
            rho: ScalarField::from_values(grid, pts.iter().map(|p| p.rho).collect()),
            u: VectorField {
                comps: (0..d)
                    .map(|a| ScalarField::from_values(grid, pts.iter().map(|p| p.u[a]).collect()))
                    .collect(),
            },
            eta: ScalarField::from_values(grid, pts.iter().map(|p| p.eta).collect()),
            stress: SymTensorField::from_points(grid, pts.iter().map(|p| p.stress).collect()),
        })
    }
}
