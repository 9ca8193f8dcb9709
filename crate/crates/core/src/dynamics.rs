//! Right-hand sides of the four evolution equations and the fixed-point time stepper.
//!
//! One step composes `w -> (rho, eta) -> T -> u` and iterates the composition with
//! `w` set to the latest velocity until it is a fixed point. Diffusion of `eta` and
//! `T` is integrated exactly, relaxation of `T` is implicit, transport and stretching
//! are explicit, and the power-law/barrier stress is implicit through a damped,
//! preconditioned Picard iteration.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constitutive::{barrier, polymer_pressure, pressure, shear_coefficient, ModelParams};
use crate::error::{Error, Result};
use crate::fields::{
    dealias, divergence, gradient, laplacian, matrix_divergence, resample, tensor_divergence, vector_gradient, Grid,
    MatrixField, ScalarField, SymTensorField, VectorField,
};
use crate::tensor::{chi_sigma, deviatoric, log_spd, SquareMat, SymMat};

/// Largest number of dt halvings [`step`] attempts before giving up.
pub const MAX_HALVINGS: usize = 10;

/// Complete model state at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub time: f64,
    pub rho: ScalarField,
    pub u: VectorField,
    pub eta: ScalarField,
    pub stress: SymTensorField,
    pub params: ModelParams,
}

impl State {
    pub fn new(
        time: f64,
        rho: ScalarField,
        u: VectorField,
        eta: ScalarField,
        stress: SymTensorField,
        params: ModelParams,
    ) -> Result<Self> {
        let grid = rho.grid();
        let same = u.comps.iter().all(|c| c.grid() == grid)
            && u.dim() == grid.dim()
            && eta.grid() == grid
            && stress.grid() == grid;
        if !same {
            return Err(Error::GridMismatch("state fields live on different grids".into()));
        }
        Ok(State {
            time,
            rho,
            u,
            eta,
            stress,
            params,
        })
    }

    pub fn grid(&self) -> &Grid {
        self.rho.grid()
    }

    pub fn dim(&self) -> usize {
        self.grid().dim()
    }

    /// Spectral interpolation or restriction of every field onto `grid`.
    pub fn resample(&self, grid: &Grid) -> Result<State> {
        let r = |f: &ScalarField| resample(f, grid);
        State::new(
            self.time,
            r(&self.rho)?,
            VectorField {
                comps: self.u.comps.iter().map(r).collect::<Result<_>>()?,
            },
            r(&self.eta)?,
            SymTensorField {
                comps: self.stress.comps.iter().map(r).collect::<Result<_>>()?,
            },
            self.params.clone(),
        )
    }

    /// Largest change of any field between two states on the same grid, in max norm.
    pub fn max_difference(&self, other: &State) -> f64 {
        let mut m = self.rho.sub(&other.rho).max_abs().max(self.eta.sub(&other.eta).max_abs());
        for (a, b) in self.u.comps.iter().zip(&other.u.comps) {
            m = m.max(a.sub(b).max_abs());
        }
        for (a, b) in self.stress.comps.iter().zip(&other.stress.comps) {
            m = m.max(a.sub(b).max_abs());
        }
        m
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StepConfig {
    pub dt: f64,
    /// Tolerance on the RMS velocity update.
    pub picard_tol: f64,
    pub picard_max: usize,
    /// Relaxation factor of the momentum iteration, in (0, 1].
    pub damping: f64,
    /// Shrink dt with [`adaptive_dt`] before each step.
    pub adaptive: bool,
}

impl Default for StepConfig {
    fn default() -> Self {
        StepConfig {
            dt: 1e-3,
            picard_tol: 1e-10,
            picard_max: 50,
            damping: 0.7,
            adaptive: false,
        }
    }
}

impl StepConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::config("step.dt", format!("must be positive, got {}", self.dt)));
        }
        if !(self.picard_tol > 0.0) {
            return Err(Error::config("step.picard_tol", "must be positive"));
        }
        if self.picard_max < 1 {
            return Err(Error::config("step.picard_max", "must be at least 1"));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::config("step.damping", format!("must lie in (0, 1], got {}", self.damping)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StepReport {
    /// Outer fixed-point iterations of the accepted attempt.
    pub picard_iterations: usize,
    /// Momentum iterations summed over the outer loop.
    pub momentum_iterations: usize,
    pub final_residual: f64,
    pub dt_used: f64,
    /// `min (1/b - |div u|)` over the new state.
    pub barrier_margin: f64,
    /// Attempts discarded before acceptance.
    pub rejections: usize,
}

/// Additive source terms for every equation (used by manufactured solutions).
#[derive(Debug, Clone, PartialEq)]
pub struct Sources {
    pub rho: ScalarField,
    pub u: VectorField,
    pub eta: ScalarField,
    pub stress: SymTensorField,
}

/// External driving: a body force `f` entering as `rho f` and optional sources.
pub trait Forcing: Send + Sync {
    fn body_force(&self, _grid: &Grid, _time: f64) -> Option<VectorField> {
        None
    }

    fn sources(&self, _grid: &Grid, _time: f64) -> Option<Sources> {
        None
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct NoForcing;

impl Forcing for NoForcing {}

/// Body force given pointwise by a closure of position and time.
pub struct BodyForce<F>(pub F);

impl<F> Forcing for BodyForce<F>
where
    F: Fn([f64; 3], f64) -> [f64; 3] + Send + Sync,
{
    fn body_force(&self, grid: &Grid, time: f64) -> Option<VectorField> {
        Some(VectorField::from_fn(grid, |x| (self.0)(x, time)))
    }
}

fn project(f: &ScalarField) -> ScalarField {
    dealias(f).to_physical()
}

fn project_vector(v: &VectorField) -> VectorField {
    VectorField {
        comps: v.comps.iter().map(project).collect(),
    }
}

fn project_tensor(t: &SymTensorField) -> SymTensorField {
    SymTensorField {
        comps: t.comps.iter().map(project).collect(),
    }
}

/// `div P(c w)`.
fn transport(c: &ScalarField, w: &VectorField) -> ScalarField {
    divergence(&VectorField {
        comps: w.comps.iter().map(|wk| project(&c.mul(wk))).collect(),
    })
}

fn rms(v: &VectorField) -> f64 {
    let n = v.grid().len() as f64;
    let s: f64 = v
        .comps
        .iter()
        .map(|c| c.values().iter().map(|x| x * x).sum::<f64>())
        .sum();
    (s / n).sqrt()
}

/// `exp(-eps |k|^2 dt)` applied per mode.
fn heat_factor(f: &ScalarField, eps: f64, dt: f64) -> ScalarField {
    if eps == 0.0 {
        return f.clone();
    }
    let g = f.grid().clone();
    f.spectral_map(|i, c| c * (-eps * g.wavenumber_sq(i) * dt).exp()).to_physical()
}

/// `-div(rho u)` in conservative form, dealiased.
pub fn rhs_continuity(rho: &ScalarField, u: &VectorField) -> ScalarField {
    transport(rho, u).scale(-1.0)
}

/// `-div(eta u) + eps lap(eta)`.
pub fn rhs_eta(eta: &ScalarField, u: &VectorField, params: &ModelParams) -> ScalarField {
    transport(eta, u).scale(-1.0).add(&laplacian(eta).scale(params.epsilon))
}

/// Right-hand side of the renormalized continuity equation for `z = b(rho)`:
/// `-div(z u) - (rho b'(rho) - b(rho)) div u`, with the bracket passed as `defect`.
pub fn rhs_renormalized(z: &ScalarField, u: &VectorField, defect: &ScalarField) -> ScalarField {
    let divu = divergence(u);
    transport(z, u).add(&project(&defect.mul(&divu))).scale(-1.0)
}

/// Pointwise `chi_sigma(T)` or `T` itself when `sigma = 0`.
fn cutoff_stress(t: &SymTensorField, sigma: f64) -> SymTensorField {
    if sigma == 0.0 {
        return t.clone();
    }
    let pts: Vec<SymMat> = t.points().par_iter().map(|p| chi_sigma(p, sigma)).collect();
    SymTensorField::from_points(t.grid(), pts)
}

/// `Div(u T)` row by row: component `ij` is `sum_k d_k (u_k T_ij)`.
fn stress_transport(t: &SymTensorField, w: &VectorField) -> SymTensorField {
    SymTensorField {
        comps: t.comps.iter().map(|c| transport(c, w)).collect(),
    }
}

/// `grad u T + T grad u^T`, dealiased.
fn stretching(grad: &MatrixField, t: &SymTensorField) -> SymTensorField {
    let g = grad.points();
    let tp = t.points();
    let pts: Vec<SymMat> = g
        .par_iter()
        .zip(tp.par_iter())
        .map(|(g, t)| SymMat::sym_part(&g.mul(&t.to_square())).scale(2.0))
        .collect();
    project_tensor(&SymTensorField::from_points(t.grid(), pts))
}

/// Explicit part of the stress equation:
/// `-Div(w T^) + (grad w T^ + T^ grad w^T) + (k/2 lambda)(eta + alpha) I - (T^ - T)/(2 lambda)`.
fn stress_explicit(t: &SymTensorField, w: &VectorField, eta: &ScalarField, params: &ModelParams) -> SymTensorField {
    let that = cutoff_stress(t, params.sigma);
    let grad = vector_gradient(w);
    let mut n = stretching(&grad, &that).sub(&stress_transport(&that, w));
    let src = eta.map(|e| params.k / (2.0 * params.lambda) * (e + params.alpha));
    let d = t.dim();
    for i in 0..d {
        let c = crate::tensor::sym_index(d, i, i);
        n.comps[c] = n.comps[c].add(&src);
    }
    if params.sigma > 0.0 {
        n = n.sub(&that.sub(t).scale(1.0 / (2.0 * params.lambda)));
    }
    n
}

/// `-Div(u T^) + (grad u T^ + T^ grad u^T) + eps lap T + (k/2 lambda)(eta + alpha) I - T^/(2 lambda)`,
/// with `T^ = chi_sigma(T)` when `sigma > 0`.
pub fn rhs_stress(t: &SymTensorField, u: &VectorField, eta: &ScalarField, params: &ModelParams) -> SymTensorField {
    let n = stress_explicit(t, u, eta, params);
    let diff = SymTensorField {
        comps: t.comps.iter().map(|c| laplacian(c).scale(params.epsilon)).collect(),
    };
    n.add(&diff).sub(&t.scale(1.0 / (2.0 * params.lambda)))
}

/// Pointwise viscous stress with the bounds needed by the preconditioner.
struct Viscous {
    stress: SymTensorField,
    /// Largest tangent modulus of the shear part.
    shear_bound: f64,
    /// Largest `Lambda''(div u)`.
    barrier_bound: f64,
}

fn viscous(grad: &MatrixField, params: &ModelParams) -> Result<Viscous> {
    let regularized = params.barrier_regularized();
    let r = params.r;
    let pts: Vec<(SymMat, f64, f64)> = grad
        .points()
        .par_iter()
        .map(|g| {
            let dd = deviatoric(g);
            let s = dd.frobenius_sq();
            let bar = barrier(g.trace(), params, regularized)?;
            let coef = shear_coefficient(s, params);
            let tangent = 2.0 * params.mu0 * (1.0 + s).powf(0.5 * (r - 4.0)) * (1.0 + (r - 1.0) * s);
            let stress = dd.scale(coef).add(&SymMat::scalar(g.dim(), bar.lam_prime));
            Ok((stress, tangent, bar.lam_second))
        })
        .collect::<Result<_>>()?;
    let shear_bound = pts.iter().map(|p| p.1).fold(0.0, f64::max);
    let barrier_bound = pts.iter().map(|p| p.2).fold(0.0, f64::max);
    Ok(Viscous {
        stress: SymTensorField::from_points(grad.grid(), pts.into_iter().map(|p| p.0).collect()),
        shear_bound,
        barrier_bound,
    })
}

/// `(alpha/2) grad Tr log chi_sigma(T)`, or `None` when `alpha = 0`.
fn log_trace_force(t: &SymTensorField, params: &ModelParams) -> Result<Option<VectorField>> {
    if params.alpha == 0.0 {
        return Ok(None);
    }
    let vals: Vec<f64> = cutoff_stress(t, params.sigma)
        .points()
        .par_iter()
        .map(|p| log_spd(p).map(|l| l.trace()))
        .collect::<Result<_>>()?;
    let tr = ScalarField::from_values(t.grid(), vals);
    Ok(Some(gradient(&project(&tr)).scale(0.5 * params.alpha)))
}

/// Everything in the momentum balance that does not depend on the new velocity.
struct MomentumSystem<'a> {
    params: &'a ModelParams,
    dt: f64,
    rho: ScalarField,
    /// `P(rho_old u_old)`.
    momentum_old: VectorField,
    /// `-div(rho_old w w) - grad p - grad q + Div T^ - alpha term + rho f + src`, dealiased.
    explicit: VectorField,
}

impl<'a> MomentumSystem<'a> {
    #[allow(clippy::too_many_arguments)]
    fn assemble(
        params: &'a ModelParams,
        dt: f64,
        rho_old: &ScalarField,
        u_old: &VectorField,
        w: &VectorField,
        rho: &ScalarField,
        eta: &ScalarField,
        stress: &SymTensorField,
        force: Option<&VectorField>,
        source: Option<&VectorField>,
    ) -> Result<Self> {
        let d = w.dim();
        let rw: Vec<ScalarField> = w.comps.iter().map(|wi| project(&rho_old.mul(wi))).collect();
        let convection = VectorField {
            comps: (0..d)
                .map(|i| {
                    divergence(&VectorField {
                        comps: w.comps.iter().map(|wj| project(&rw[i].mul(wj))).collect(),
                    })
                })
                .collect(),
        };
        let p = project(&rho.map(|r| pressure(r, params)));
        let q = project(&eta.map(|e| polymer_pressure(e, params)));
        let that = cutoff_stress(stress, params.sigma);
        let mut explicit = tensor_divergence(&project_tensor(&that))
            .sub(&convection)
            .sub(&gradient(&p.add(&q)));
        if let Some(lt) = log_trace_force(stress, params)? {
            explicit = explicit.sub(&lt);
        }
        if let Some(f) = force {
            explicit = explicit.add(&VectorField {
                comps: f.comps.iter().map(|fi| project(&rho.mul(fi))).collect(),
            });
        }
        if let Some(s) = source {
            explicit = explicit.add(&project_vector(s));
        }
        Ok(MomentumSystem {
            params,
            dt,
            rho: rho.clone(),
            momentum_old: VectorField {
                comps: u_old.comps.iter().map(|c| project(&rho_old.mul(c))).collect(),
            },
            explicit,
        })
    }

    /// Damped preconditioned iteration `u <- u - theta A^-1 P(P(R(u)) / rho)`.
    ///
    /// `A = (1/dt + nu |k|^2) I + c k k^T` per mode with `nu`, `c` bounding the
    /// viscous tangent divided by `min rho`; it is inverted by Sherman-Morrison.
    fn solve(&self, guess: &VectorField, config: &StepConfig) -> Result<(VectorField, f64, usize)> {
        let grid = self.rho.grid().clone();
        let d = grid.dim();
        let rho_min = self.rho.min();
        if !(rho_min > 0.0) {
            return Err(Error::Domain(format!("density lost positivity: min {rho_min:.3e}")));
        }
        let mut u = project_vector(guess);
        let mut residual = f64::INFINITY;
        for it in 1..=config.picard_max {
            let grad = vector_gradient(&u);
            let visc = viscous(&grad, self.params)?;
            let div_s = matrix_divergence(&sym_to_matrix(&project_tensor(&visc.stress)));
            let mut g = Vec::with_capacity(d);
            for i in 0..d {
                let r = project(&self.rho.mul(&u.comps[i]))
                    .sub(&self.momentum_old.comps[i])
                    .scale(1.0 / self.dt)
                    .sub(&div_s.comps[i])
                    .sub(&self.explicit.comps[i]);
                g.push(dealias(&r.zip_map(&self.rho, |a, b| a / b)).into_coefficients());
            }
            let nu = 0.5 * visc.shear_bound / rho_min;
            let c = (visc.shear_bound * (0.5 - 1.0 / d as f64) + visc.barrier_bound) / rho_min;
            let inv_dt = 1.0 / self.dt;
            let mut delta: Vec<Vec<Complex64>> = vec![vec![Complex64::new(0.0, 0.0); grid.len()]; d];
            for idx in 0..grid.len() {
                if !grid.is_retained(idx) {
                    continue;
                }
                let k = grid.wavevector(idx);
                let kk = grid.wavenumber_sq(idx);
                let a = inv_dt + nu * kk;
                let kg: Complex64 = (0..d).map(|j| g[j][idx] * k[j]).sum();
                let corr = kg * (c / (a + c * kk));
                for j in 0..d {
                    delta[j][idx] = (g[j][idx] - corr * k[j]) / a;
                }
            }
            let delta = VectorField {
                comps: delta
                    .into_iter()
                    .map(|c| ScalarField::from_coefficients(&grid, c).to_physical())
                    .collect(),
            };
            residual = rms(&delta);
            u = u.sub(&delta.scale(config.damping));
            if !residual.is_finite() {
                break;
            }
            if residual <= config.picard_tol {
                return Ok((u, residual, it));
            }
        }
        Err(Error::Nonconvergence {
            residual,
            iterations: config.picard_max,
        })
    }
}

fn sym_to_matrix(t: &SymTensorField) -> MatrixField {
    let d = t.dim();
    let mut comps = Vec::with_capacity(d * d);
    for i in 0..d {
        for j in 0..d {
            comps.push(t.component(i, j).clone());
        }
    }
    MatrixField { comps }
}

/// Solves the implicit momentum balance with `rho`, `eta`, `T` frozen at their values in
/// `state`, convection velocity `u_guess`, and previous velocity `state.u`.
///
/// Returns the new velocity and the RMS size of the last undamped update.
pub fn solve_momentum(
    state: &State,
    u_guess: &VectorField,
    dt: f64,
    config: &StepConfig,
    forcing: &dyn Forcing,
) -> Result<(VectorField, f64)> {
    let grid = state.grid();
    let t1 = state.time + dt;
    let f = forcing.body_force(grid, t1);
    let src = forcing.sources(grid, t1);
    let sys = MomentumSystem::assemble(
        &state.params,
        dt,
        &state.rho,
        &state.u,
        u_guess,
        &state.rho,
        &state.eta,
        &state.stress,
        f.as_ref(),
        src.as_ref().map(|s| &s.u),
    )?;
    let (u, res, _) = sys.solve(u_guess, config)?;
    Ok((u, res))
}

/// Explicit time derivative of the velocity, `(M - u d_t rho) / rho`, where `M` is the
/// conservative momentum right-hand side.
pub fn rhs_momentum(state: &State, forcing: &dyn Forcing) -> Result<VectorField> {
    let p = &state.params;
    let grid = state.grid();
    let f = forcing.body_force(grid, state.time);
    let src = forcing.sources(grid, state.time);
    let sys = MomentumSystem::assemble(
        p,
        1.0,
        &state.rho,
        &state.u,
        &state.u,
        &state.rho,
        &state.eta,
        &state.stress,
        f.as_ref(),
        src.as_ref().map(|s| &s.u),
    )?;
    let grad = vector_gradient(&state.u);
    let visc = viscous(&grad, p)?;
    let div_s = matrix_divergence(&sym_to_matrix(&project_tensor(&visc.stress)));
    let mut drho = rhs_continuity(&state.rho, &state.u);
    if let Some(s) = &src {
        drho = drho.add(&project(&s.rho));
    }
    Ok(VectorField {
        comps: (0..state.dim())
            .map(|i| {
                let m = sys.explicit.comps[i].add(&div_s.comps[i]);
                let num = m.sub(&project(&state.u.comps[i].mul(&drho)));
                project(&num.zip_map(&state.rho, |a, b| a / b))
            })
            .collect(),
    })
}

/// Explicit right-hand sides of all four equations, bundled as a state-shaped increment.
pub fn rhs_all(state: &State, forcing: &dyn Forcing) -> Result<State> {
    let p = &state.params;
    let src = forcing.sources(state.grid(), state.time);
    let mut rho = rhs_continuity(&state.rho, &state.u);
    let mut eta = rhs_eta(&state.eta, &state.u, p);
    let mut stress = rhs_stress(&state.stress, &state.u, &state.eta, p);
    if let Some(s) = &src {
        rho = rho.add(&project(&s.rho));
        eta = eta.add(&project(&s.eta));
        stress = stress.add(&project_tensor(&s.stress));
    }
    Ok(State {
        time: 1.0,
        rho,
        u: rhs_momentum(state, forcing)?,
        eta,
        stress,
        params: p.clone(),
    })
}

/// One attempt at a step of exactly `dt`, without retries.
pub fn try_step(state: &State, dt: f64, config: &StepConfig, forcing: &dyn Forcing) -> Result<(State, StepReport)> {
    let p = &state.params;
    let grid = state.grid();
    let t1 = state.time + dt;
    let f = forcing.body_force(grid, t1);
    let src = forcing.sources(grid, t1);
    let bound = p.div_bound();

    let mut w = project_vector(&state.u);
    let mut momentum_iterations = 0;
    let mut residual = f64::INFINITY;
    for outer in 1..=config.picard_max {
        // (rho, eta) with the current velocity iterate
        let mut drho = rhs_continuity(&state.rho, &w);
        let mut eta_rhs = transport(&state.eta, &w).scale(-1.0);
        if let Some(s) = &src {
            drho = drho.add(&project(&s.rho));
            eta_rhs = eta_rhs.add(&project(&s.eta));
        }
        let rho1 = state.rho.add(&drho.scale(dt));
        let eta1 = heat_factor(&state.eta.add(&eta_rhs.scale(dt)), p.epsilon, dt);

        // T with diffusion exact and relaxation implicit
        let mut nt = stress_explicit(&state.stress, &w, &eta1, p);
        if let Some(s) = &src {
            nt = nt.add(&project_tensor(&s.stress));
        }
        let relax = 1.0 / (1.0 + dt / (2.0 * p.lambda));
        let t1_stress = SymTensorField {
            comps: state
                .stress
                .comps
                .iter()
                .zip(&nt.comps)
                .map(|(t, n)| heat_factor(&t.add(&n.scale(dt)), p.epsilon, dt).scale(relax))
                .collect(),
        };

        let sys = MomentumSystem::assemble(
            p,
            dt,
            &state.rho,
            &state.u,
            &w,
            &rho1,
            &eta1,
            &t1_stress,
            f.as_ref(),
            src.as_ref().map(|s| &s.u),
        )?;
        let (u1, _, inner) = sys.solve(&w, config)?;
        momentum_iterations += inner;
        residual = rms(&u1.sub(&w));
        w = u1;
        if residual <= config.picard_tol {
            let max_div = divergence(&w).max_abs();
            if !(max_div < bound) {
                return Err(Error::Barrier { value: max_div, bound });
            }
            let next = State {
                time: t1,
                rho: rho1,
                u: w,
                eta: eta1,
                stress: t1_stress,
                params: p.clone(),
            };
            let report = StepReport {
                picard_iterations: outer,
                momentum_iterations,
                final_residual: residual,
                dt_used: dt,
                barrier_margin: bound - max_div,
                rejections: 0,
            };
            return Ok((next, report));
        }
    }
    Err(Error::Nonconvergence {
        residual,
        iterations: config.picard_max,
    })
}

/// Advances by `config.dt` (or the adaptive choice), halving dt after a barrier
/// violation or a failed fixed point, at most [`MAX_HALVINGS`] times.
pub fn step(state: &State, config: &StepConfig, forcing: &dyn Forcing) -> Result<(State, StepReport)> {
    let dt = if config.adaptive {
        adaptive_dt_with(state, config, forcing)?
    } else {
        config.dt
    };
    step_with_dt(state, dt, config, forcing)
}

/// [`step`] with an explicit initial dt.
pub fn step_with_dt(state: &State, dt: f64, config: &StepConfig, forcing: &dyn Forcing) -> Result<(State, StepReport)> {
    config.validate()?;
    let mut dt = dt;
    let mut rejections = 0;
    loop {
        match try_step(state, dt, config, forcing) {
            Ok((next, mut report)) => {
                report.rejections = rejections;
                return Ok((next, report));
            }
            Err(Error::Barrier { .. } | Error::Nonconvergence { .. }) if rejections < MAX_HALVINGS => {
                rejections += 1;
                dt *= 0.5;
            }
            Err(e) => return Err(e),
        }
    }
}

/// Constant state `rho = rho_bar, u = 0, eta = eta_bar, T = k eta_bar I`.
pub fn equilibrium_state(rho_bar: f64, eta_bar: f64, params: &ModelParams, grid: &Grid) -> Result<State> {
    if !(rho_bar > 0.0 && eta_bar > 0.0) {
        return Err(Error::Domain(format!(
            "equilibrium needs positive densities, got rho {rho_bar}, eta {eta_bar}"
        )));
    }
    State::new(
        0.0,
        ScalarField::constant(grid, rho_bar),
        VectorField::zeros(grid),
        ScalarField::constant(grid, eta_bar),
        SymTensorField::scalar(grid, params.k * eta_bar),
        params.clone(),
    )
}

const CFL: f64 = 0.5;
const BARRIER_SAFETY: f64 = 0.5;

/// `min(dt, CFL h / max|u|, c (1/b - max|div u|) / max|d_t div u|)` for the unforced system.
pub fn adaptive_dt(state: &State, config: &StepConfig) -> Result<f64> {
    adaptive_dt_with(state, config, &NoForcing)
}

pub fn adaptive_dt_with(state: &State, config: &StepConfig, forcing: &dyn Forcing) -> Result<f64> {
    let mut dt = config.dt;
    let umax = state.u.max_abs();
    if umax > 0.0 {
        dt = dt.min(CFL * state.grid().spacing() / umax);
    }
    let margin = state.params.div_bound() - divergence(&state.u).max_abs();
    let rate = divergence(&rhs_momentum(state, forcing)?).max_abs();
    if rate > 0.0 {
        dt = dt.min(BARRIER_SAFETY * margin.max(0.0) / rate);
    }
    Ok(dt.max(config.dt * 0.5f64.powi(MAX_HALVINGS as i32)))
}

/// `grad u` of a state's velocity as pointwise matrices.
pub fn velocity_gradient(u: &VectorField) -> Vec<SquareMat> {
    vector_gradient(u).points()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{integrate, random_smooth_field};

    fn grid(n: usize) -> Grid {
        Grid::periodic(2, n).unwrap()
    }

    fn smooth_state(g: &Grid, seed: u64, amp: f64) -> State {
        let p = ModelParams::default();
        let rho = random_smooth_field(g, seed, 3.0, 0.3, Some(0.6));
        let eta = random_smooth_field(g, seed + 1, 3.0, 0.3, Some(0.6));
        let u = VectorField {
            comps: (0..2).map(|i| random_smooth_field(g, seed + 2 + i, 3.0, amp, None)).collect(),
        };
        let pert = random_smooth_field(g, seed + 9, 3.0, 0.05, None);
        let eta_v = eta.values().into_owned();
        let pv = pert.values().into_owned();
        let pts = (0..g.len())
            .map(|i| {
                let mut m = SymMat::scalar(2, p.k * eta_v[i]);
                m.set(0, 1, pv[i]);
                m
            })
            .collect();
        State::new(0.0, rho, u, eta, SymTensorField::from_points(g, pts), p).unwrap()
    }

    #[test]
    fn continuity_examples() {
        let g = grid(32);
        let u = VectorField::from_fn(&g, |x| [x[0].sin(), x[1].cos(), 0.0]);
        let rho = random_smooth_field(&g, 1, 2.0, 1.0, Some(0.5));
        assert!(rhs_continuity(&rho, &VectorField::zeros(&g)).max_abs() < 1e-15);
        let c = ScalarField::constant(&g, 2.0);
        let expect = divergence(&u).scale(-2.0);
        assert!(rhs_continuity(&c, &u).sub(&expect).max_abs() < 1e-12);
        // symbolic: rho = 1 + 0.5 cos x, u = (sin x, 0) => -div(rho u) = -(cos x + 0.5 cos 2x)
        let rho = ScalarField::from_fn(&g, |x| 1.0 + 0.5 * x[0].cos());
        let u = VectorField::from_fn(&g, |x| [x[0].sin(), 0.0, 0.0]);
        let exact = ScalarField::from_fn(&g, |x| -(x[0].cos() + 0.5 * (2.0 * x[0]).cos()));
        assert!(rhs_continuity(&rho, &u).sub(&exact).max_abs() < 1e-12);
    }

    #[test]
    fn eta_examples() {
        let g = grid(32);
        let p = ModelParams::default();
        let zero = VectorField::zeros(&g);
        assert!(rhs_eta(&ScalarField::constant(&g, 1.3), &zero, &p).max_abs() < 1e-15);
        let s = ScalarField::from_fn(&g, |x| x[0].sin());
        let out = rhs_eta(&s, &zero, &p);
        assert!(out.add(&s.scale(p.epsilon)).max_abs() < 1e-13);
        // eta = 2 + sin y, u = (0, cos y) => -d_y((2 + sin y) cos y) - eps (-sin y)
        let eta = ScalarField::from_fn(&g, |x| 2.0 + x[1].sin());
        let u = VectorField::from_fn(&g, |x| [0.0, x[1].cos(), 0.0]);
        let exact = ScalarField::from_fn(&g, |x| 2.0 * x[1].sin() - (2.0 * x[1]).cos() - p.epsilon * x[1].sin());
        assert!(rhs_eta(&eta, &u, &p).sub(&exact).max_abs() < 1e-12);
    }

    #[test]
    fn stress_examples() {
        let g = grid(16);
        let p = ModelParams::default();
        let eq = equilibrium_state(1.0, 1.7, &p, &g).unwrap();
        let r = rhs_stress(&eq.stress, &eq.u, &eq.eta, &p);
        assert!(r.comps.iter().all(|c| c.max_abs() < 1e-14));

        let eta = random_smooth_field(&g, 3, 2.0, 0.2, Some(0.5));
        let zero = SymTensorField::zeros(&g);
        let r = rhs_stress(&zero, &VectorField::zeros(&g), &eta, &p);
        let expect = eta.scale(p.k / (2.0 * p.lambda));
        assert!(r.component(0, 0).sub(&expect).max_abs() < 1e-14);
        assert!(r.component(1, 1).sub(&expect).max_abs() < 1e-14);
        assert!(r.component(0, 1).max_abs() < 1e-14);
    }

    #[test]
    fn stretching_vanishes_for_rotation_with_isotropic_stress() {
        let g = grid(8);
        let t = SymTensorField::scalar(&g, 3.0);
        let grad = MatrixField {
            comps: vec![
                ScalarField::constant(&g, 0.0),
                ScalarField::constant(&g, 0.7),
                ScalarField::constant(&g, -0.7),
                ScalarField::constant(&g, 0.0),
            ],
        };
        let s = stretching(&grad, &t);
        assert!(s.comps.iter().all(|c| c.max_abs() < 1e-14));
    }

    #[test]
    fn equilibrium_examples() {
        let g = grid(16);
        let p = ModelParams::default();
        let s = equilibrium_state(1.0, 1.0, &p, &g).unwrap();
        for m in s.stress.points() {
            assert_eq!(m, SymMat::identity(2));
        }
        assert!(rhs_continuity(&s.rho, &s.u).max_abs() == 0.0);
        assert!(rhs_eta(&s.eta, &s.u, &p).max_abs() < 1e-15);
        assert!(equilibrium_state(0.0, 1.0, &p, &g).is_err());
    }

    #[test]
    fn momentum_at_equilibrium_is_zero() {
        let g = grid(16);
        let s = equilibrium_state(1.0, 1.0, &ModelParams::default(), &g).unwrap();
        let (u, res) = solve_momentum(&s, &VectorField::zeros(&g), 1e-3, &StepConfig::default(), &NoForcing).unwrap();
        assert!(res <= 1e-12);
        assert!(u.max_abs() < 1e-12);
    }

    #[test]
    fn momentum_matches_linear_stokes_modes() {
        let g = grid(16);
        let params = ModelParams {
            r: 2.0,
            ..Default::default()
        };
        let mut s = equilibrium_state(1.0, 1.0, &params, &g).unwrap();
        s.u = VectorField {
            comps: (0..2).map(|i| random_smooth_field(&g, 20 + i, 2.0, 1.0, None)).collect(),
        };
        let amp = 1e-9;
        s.u = s.u.scale(amp / s.u.max_abs());
        let dt = 1e-2;
        let cfg = StepConfig {
            picard_tol: 1e-22,
            picard_max: 200,
            ..Default::default()
        };
        let (u, _) = solve_momentum(&s, &s.u, dt, &cfg, &NoForcing).unwrap();

        // per-mode 2x2 solve by Cramer's rule
        let mu = params.mu0;
        let lam2 = 2.0;
        let old: Vec<Vec<Complex64>> = s.u.comps.iter().map(|c| c.coefficients().into_owned()).collect();
        let mut exact = vec![vec![Complex64::new(0.0, 0.0); g.len()]; 2];
        for idx in 0..g.len() {
            if !g.is_retained(idx) {
                continue;
            }
            let k = g.wavevector(idx);
            let kk = k[0] * k[0] + k[1] * k[1];
            let c = mu * (1.0 - 2.0 / 2.0) + lam2;
            let m = [
                [1.0 / dt + mu * kk + c * k[0] * k[0], c * k[0] * k[1]],
                [c * k[1] * k[0], 1.0 / dt + mu * kk + c * k[1] * k[1]],
            ];
            let b = [old[0][idx] / dt, old[1][idx] / dt];
            let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
            exact[0][idx] = (b[0] * m[1][1] - b[1] * m[0][1]) / det;
            exact[1][idx] = (b[1] * m[0][0] - b[0] * m[1][0]) / det;
        }
        for i in 0..2 {
            let e = ScalarField::from_coefficients(&g, exact[i].clone()).to_physical();
            let err = u.comps[i].sub(&e).max_abs();
            assert!(err < 1e-8 * amp, "component {i}: {err:e}");
        }
    }

    #[test]
    fn equilibrium_is_fixed_point_of_step() {
        let g = grid(16);
        let s0 = equilibrium_state(1.0, 1.0, &ModelParams::default(), &g).unwrap();
        let mut s = s0.clone();
        for _ in 0..5 {
            s = step(&s, &StepConfig::default(), &NoForcing).unwrap().0;
        }
        assert!(s.max_difference(&s0) < 1e-11);
    }

    #[test]
    fn step_conserves_mass() {
        let g = grid(16);
        let mut s = smooth_state(&g, 5, 0.1);
        let m0 = integrate(&s.rho);
        let e0 = integrate(&s.eta);
        for _ in 0..5 {
            s = step(&s, &StepConfig::default(), &NoForcing).unwrap().0;
        }
        assert!(((integrate(&s.rho) - m0) / m0).abs() < 1e-12);
        assert!(((integrate(&s.eta) - e0) / e0).abs() < 1e-12);
    }

    fn euler_defect(s: &State, dt: f64) -> f64 {
        let cfg = StepConfig {
            dt,
            picard_tol: 1e-13,
            ..Default::default()
        };
        let (next, _) = step(s, &cfg, &NoForcing).unwrap();
        let rhs = rhs_all(s, &NoForcing).unwrap();
        let euler = State {
            time: s.time + dt,
            rho: s.rho.add(&rhs.rho.scale(dt)),
            u: s.u.add(&rhs.u.scale(dt)),
            eta: s.eta.add(&rhs.eta.scale(dt)),
            stress: s.stress.add(&rhs.stress.scale(dt)),
            params: s.params.clone(),
        };
        next.max_difference(&euler)
    }

    #[test]
    fn step_agrees_with_explicit_euler_to_second_order() {
        let g = grid(16);
        let s = smooth_state(&g, 11, 0.1);
        let d1 = euler_defect(&s, 2e-3);
        let d2 = euler_defect(&s, 1e-3);
        let ratio = d1 / d2;
        assert!((3.2..4.8).contains(&ratio), "defects {d1:e} {d2:e} ratio {ratio}");
    }

    #[test]
    fn adaptive_dt_examples() {
        let g = grid(16);
        let p = ModelParams::default();
        let cfg = StepConfig::default();
        let eq = equilibrium_state(1.0, 1.0, &p, &g).unwrap();
        assert_eq!(adaptive_dt(&eq, &cfg).unwrap(), cfg.dt);

        let big = StepConfig { dt: 10.0, ..cfg.clone() };
        let mut s = eq.clone();
        s.u = VectorField::from_fn(&g, |x| [0.0, 0.1 * x[0].sin(), 0.0]);
        let d1 = adaptive_dt(&s, &big).unwrap();
        s.u = s.u.scale(2.0);
        let d2 = adaptive_dt(&s, &big).unwrap();
        assert!((d1 / d2 - 2.0).abs() < 1e-12, "{d1} {d2}");

        let mut near = eq;
        near.u = VectorField::from_fn(&g, |x| [0.95 * x[0].sin(), 0.0, 0.0]);
        assert!((divergence(&near.u).max_abs() - 0.95).abs() < 1e-12);
        assert!(adaptive_dt(&near, &cfg).unwrap() < cfg.dt);
    }

    #[test]
    fn barrier_violation_triggers_rejection() {
        let g = grid(16);
        let p = ModelParams::default();
        let s = equilibrium_state(1.0, 1.0, &p, &g).unwrap();
        let push = BodyForce(|x: [f64; 3], _t: f64| [400.0 * x[0].sin(), 400.0 * x[1].sin(), 0.0]);
        let cfg = StepConfig { dt: 0.05, ..Default::default() };
        let (next, report) = step(&s, &cfg, &push).unwrap();
        assert!(report.rejections > 0);
        assert!(divergence(&next.u).max_abs() < 1.0 / p.b);
        assert!(report.dt_used < cfg.dt);
    }

    #[test]
    fn renormalized_square_tracks_squared_density() {
        let g = grid(32);
        let rho0 = random_smooth_field(&g, 2, 4.0, 0.2, Some(0.8));
        let u = VectorField {
            comps: (0..2).map(|i| random_smooth_field(&g, 30 + i, 4.0, 0.2, None)).collect(),
        };
        let dt = 1e-3;
        let mut rho = rho0.clone();
        let mut z = rho0.mul(&rho0);
        for _ in 0..100 {
            let drho = rhs_continuity(&rho, &u);
            let dz = rhs_renormalized(&z, &u, &z);
            rho = rho.add(&drho.scale(dt));
            z = z.add(&dz.scale(dt));
        }
        let gap = z.sub(&rho.mul(&rho)).max_abs();
        assert!(gap < 1e-2, "gap {gap:e}");
    }
}
