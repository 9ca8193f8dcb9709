//! Energy ledger, relative entropy, convexity gaps, Korn ratios, the trace-log
//! inequality and positivity monitors.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constitutive::{barrier, fluid_pressure, polymer_laws, polymer_potential, shear_coefficient, ModelParams};
use crate::dynamics::State;
use crate::error::{Error, Result};
use crate::fields::{
    gradient, integrate, lp_norm, lp_norm_matrix, lp_norm_vector, partial, vector_gradient, ScalarField,
    SymTensorField, VectorField,
};
use crate::tensor::{apply_fn, chi, deviatoric, eig_sym, SymMat};

/// Exponent `3 + a` of the monitored stress norm.
pub const STRESS_NORM_EXPONENT: f64 = 3.75;

/// Term-by-term energy balance of one state.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EnergyLedger {
    pub time: f64,
    pub kinetic: f64,
    pub pressure_potential: f64,
    pub polymer: f64,
    pub stress_trace: f64,
    pub eta_dissipation: f64,
    pub viscous_dissipation: f64,
    /// `int Lambda(div u)`.
    pub barrier_dissipation: f64,
    /// `int Lambda'(div u) div u`, the power actually absorbed by the barrier.
    pub barrier_work: f64,
    pub stress_relaxation: f64,
    pub forcing: f64,
    pub eta_source: f64,
}

impl EnergyLedger {
    pub const COLUMNS: [&'static str; 12] = [
        "time",
        "kinetic",
        "pressure_potential",
        "polymer",
        "stress_trace",
        "eta_dissipation",
        "viscous_dissipation",
        "barrier_dissipation",
        "barrier_work",
        "stress_relaxation",
        "forcing",
        "eta_source",
    ];

    pub fn values(&self) -> [f64; 12] {
        [
            self.time,
            self.kinetic,
            self.pressure_potential,
            self.polymer,
            self.stress_trace,
            self.eta_dissipation,
            self.viscous_dissipation,
            self.barrier_dissipation,
            self.barrier_work,
            self.stress_relaxation,
            self.forcing,
            self.eta_source,
        ]
    }

    pub fn energy(&self) -> f64 {
        self.kinetic + self.pressure_potential + self.polymer + self.stress_trace
    }

    /// Dissipation with the barrier entering through `Lambda(div u)`.
    pub fn dissipation(&self) -> f64 {
        self.eta_dissipation + self.viscous_dissipation + self.barrier_dissipation + self.stress_relaxation
    }
}

/// Ledger with no body force.
pub fn energy_ledger(state: &State) -> EnergyLedger {
    energy_ledger_with_force(state, None)
}

/// Ledger including the power `int rho f . u` of a body force.
pub fn energy_ledger_with_force(state: &State, force: Option<&VectorField>) -> EnergyLedger {
    let p = &state.params;
    let grid = state.grid();
    let d = grid.dim();
    let cell = grid.cell_volume();
    let rho = state.rho.values();
    let eta = state.eta.values();
    let u: Vec<_> = state.u.comps.iter().map(|c| c.values()).collect();
    let grad_eta: Vec<_> = gradient(&state.eta).comps.into_iter().map(|c| c.into_values()).collect();
    let grad_u = vector_gradient(&state.u).points();
    let regularized = p.barrier_regularized();

    let mut kinetic = 0.0;
    let mut pressure_potential = 0.0;
    let mut polymer = 0.0;
    let mut eta_dissipation = 0.0;
    let mut viscous_dissipation = 0.0;
    let mut barrier_dissipation = 0.0;
    let mut barrier_work = 0.0;
    for i in 0..grid.len() {
        let speed_sq: f64 = u.iter().map(|c| c[i] * c[i]).sum();
        kinetic += 0.5 * rho[i] * speed_sq;
        pressure_potential += p.a * rho[i].powf(p.gamma) / (p.gamma - 1.0);
        polymer += polymer_potential(eta[i], p);
        let ge: f64 = grad_eta.iter().map(|c| c[i] * c[i]).sum();
        // 2 eps (2 kL |grad sqrt(eta)|^2 + zeta |grad eta|^2) with |grad sqrt eta|^2 = |grad eta|^2 / (4 eta)
        eta_dissipation += 2.0 * p.epsilon * (p.k * p.ell * ge / (2.0 * eta[i]) + p.zeta * ge);
        let dd = deviatoric(&grad_u[i]);
        let s = dd.frobenius_sq();
        viscous_dissipation += shear_coefficient(s, p) * s;
        let z = grad_u[i].trace();
        match barrier(z, p, regularized) {
            Ok(b) => {
                barrier_dissipation += b.lam;
                barrier_work += b.lam_prime * z;
            }
            Err(_) => {
                barrier_dissipation = f64::INFINITY;
                barrier_work = f64::INFINITY;
            }
        }
    }
    let trace = integrate(&state.stress.trace());
    let forcing = match force {
        Some(f) => {
            let fv: Vec<_> = f.comps.iter().map(|c| c.values()).collect();
            (0..grid.len())
                .map(|i| rho[i] * (0..d).map(|a| fv[a][i] * u[a][i]).sum::<f64>())
                .sum::<f64>()
                * cell
        }
        None => 0.0,
    };
    EnergyLedger {
        time: state.time,
        kinetic: kinetic * cell,
        pressure_potential: pressure_potential * cell,
        polymer: polymer * cell,
        stress_trace: 0.5 * trace,
        eta_dissipation: eta_dissipation * cell,
        viscous_dissipation: viscous_dissipation * cell,
        barrier_dissipation: barrier_dissipation * cell,
        barrier_work: barrier_work * cell,
        stress_relaxation: trace / (4.0 * p.lambda),
        forcing,
        eta_source: d as f64 * p.k / (4.0 * p.lambda) * integrate(&state.eta),
    }
}

/// `[E(next) - E(prev)]/dt + D(next) - F(next) - S(next)` with the barrier counted
/// through `Lambda(div u)`; this is `<= 0 + O(dt)`.
pub fn energy_budget_residual(prev: &EnergyLedger, next: &EnergyLedger, dt: f64) -> f64 {
    (next.energy() - prev.energy()) / dt + next.dissipation() - next.forcing - next.eta_source
}

/// Same balance with the barrier counted through `Lambda'(div u) div u`; this tends to 0
/// at first order in dt.
pub fn energy_identity_residual(prev: &EnergyLedger, next: &EnergyLedger, dt: f64) -> f64 {
    energy_budget_residual(prev, next, dt) - next.barrier_dissipation + next.barrier_work
}

/// `d/dt 1/2 int Tr T + 1/(4 lambda) int Tr T - d k/(4 lambda) int (eta + alpha) - int T : grad u`,
/// with the time derivative a backward difference and the rest evaluated at `next`.
pub fn trace_balance_residual(prev: &State, next: &State, dt: f64) -> f64 {
    let p = &next.params;
    let d = next.dim() as f64;
    let tr_prev = integrate(&prev.stress.trace());
    let tr_next = integrate(&next.stress.trace());
    let grad = vector_gradient(&next.u).points();
    let stress = next.stress.points();
    let power: f64 = grad
        .iter()
        .zip(&stress)
        .map(|(g, t)| SymMat::sym_part(g).ddot(t))
        .sum::<f64>()
        * next.grid().cell_volume();
    0.5 * (tr_next - tr_prev) / dt + tr_next / (4.0 * p.lambda)
        - d * p.k / (4.0 * p.lambda) * (integrate(&next.eta) + p.alpha * next.grid().volume())
        - power
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RelEntropyReport {
    pub e1: f64,
    pub e2: f64,
    pub stress_gap: f64,
    pub total: f64,
}

impl RelEntropyReport {
    pub const COLUMNS: [&'static str; 4] = ["rel_entropy_e1", "rel_entropy_e2", "rel_entropy_stress_gap", "rel_entropy_total"];

    pub fn values(&self) -> [f64; 4] {
        [self.e1, self.e2, self.stress_gap, self.total]
    }
}

/// Relative entropy of `state` with respect to `reference` on the same grid.
pub fn relative_entropy(state: &State, reference: &State) -> Result<RelEntropyReport> {
    if state.grid() != reference.grid() {
        return Err(Error::GridMismatch(format!(
            "{:?} versus {:?}",
            state.grid(),
            reference.grid()
        )));
    }
    let p = &state.params;
    let grid = state.grid();
    let cell = grid.cell_volume();
    let (rho, rho_r) = (state.rho.values(), reference.rho.values());
    let (eta, eta_r) = (state.eta.values(), reference.eta.values());
    let u: Vec<_> = state.u.comps.iter().map(|c| c.values()).collect();
    let u_r: Vec<_> = reference.u.comps.iter().map(|c| c.values()).collect();
    let t = state.stress.points();
    let t_r = reference.stress.points();
    let mut e1 = 0.0;
    let mut e2 = 0.0;
    let mut gap = 0.0;
    for i in 0..grid.len() {
        let du: f64 = u.iter().zip(&u_r).map(|(a, b)| (a[i] - b[i]).powi(2)).sum();
        let h = fluid_pressure(rho[i], p)?;
        let hr = fluid_pressure(rho_r[i], p)?;
        e1 += 0.5 * rho[i] * du + h.potential - hr.potential - hr.dpotential * (rho[i] - rho_r[i]);
        let g = polymer_laws(eta[i], p)?;
        let gr = polymer_laws(eta_r[i], p)?;
        if eta[i] != eta_r[i] {
            e2 += g.g - gr.g - gr.dg * (eta[i] - eta_r[i]);
        }
        gap += 0.5 * t[i].sub(&t_r[i]).frobenius_sq();
    }
    let (e1, e2, stress_gap) = (e1 * cell, e2 * cell, gap * cell);
    Ok(RelEntropyReport {
        e1,
        e2,
        stress_gap,
        total: e1 + e2 + stress_gap,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Potential {
    /// Pressure potential `H(rho)`.
    Fluid,
    /// Polymer potential `G(eta)`.
    Polymer,
}

/// Bregman gap `F(x) - F(x_ref) - F'(x_ref)(x - x_ref)` and its quadratic lower bound
/// `1/2 min_{[lo, hi]} F'' (x - x_ref)^2`.
pub fn convexity_gap(x: f64, x_ref: f64, which: Potential, params: &ModelParams, lo: f64, hi: f64) -> Result<(f64, f64)> {
    if !(lo > 0.0 && hi >= lo) {
        return Err(Error::Domain(format!("interval [{lo}, {hi}] must be positive")));
    }
    for v in [x, x_ref] {
        if !(v >= lo && v <= hi) {
            return Err(Error::Domain(format!("{v} lies outside [{lo}, {hi}]")));
        }
    }
    let laws = |v: f64| -> Result<(f64, f64, f64)> {
        Ok(match which {
            Potential::Fluid => {
                let h = fluid_pressure(v, params)?;
                (h.potential, h.dpotential, h.d2potential)
            }
            Potential::Polymer => {
                let g = polymer_laws(v, params)?;
                (g.g, g.dg, g.d2g)
            }
        })
    };
    if x == x_ref {
        return Ok((0.0, 0.0));
    }
    let (f, _, _) = laws(x)?;
    let (fr, dfr, _) = laws(x_ref)?;
    // both second derivatives are monotone, so the minimum sits at an endpoint
    let curv = laws(lo)?.2.min(laws(hi)?.2);
    let dx = x - x_ref;
    Ok((f - fr - dfr * dx, 0.5 * curv * dx * dx))
}

/// `||v||_{1,p} / ||Dd(v)||_p` for a mean-zero field.
pub fn korn_ratio(v: &VectorField, p: f64) -> Result<f64> {
    if !(p >= 1.0) {
        return Err(Error::Domain(format!("p must be at least 1, got {p}")));
    }
    let vol = v.grid().volume();
    let scale = v.max_abs().max(f64::MIN_POSITIVE);
    for c in &v.comps {
        if (integrate(c) / vol).abs() > 1e-12 * scale {
            return Err(Error::Domain("korn_ratio needs a mean-zero field".into()));
        }
    }
    let grad = vector_gradient(v);
    let dd: Vec<f64> = grad.points().iter().map(|g| deviatoric(g).frobenius()).collect();
    let dd_norm = lp_norm(&ScalarField::from_values(v.grid(), dd), p);
    if dd_norm < 1e-14 {
        return Err(Error::DegenerateField(format!(
            "deviatoric strain norm {dd_norm:e} is numerically zero"
        )));
    }
    let (a, b) = (lp_norm_vector(v, p), lp_norm_matrix(&grad, p));
    let full = if p.is_infinite() { a.max(b) } else { (a.powf(p) + b.powf(p)).powf(1.0 / p) };
    Ok(full / dd_norm)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceLogCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
}

/// Compares `-int grad P :: grad [chi_sigma(P)]^-1` with `(1/d) int |grad Tr log chi_sigma(P)|^2`.
pub fn trace_log_inequality_check(pf: &SymTensorField, sigma: f64) -> Result<TraceLogCheck> {
    if !(sigma > 0.0) {
        return Err(Error::Domain(format!("sigma must be positive, got {sigma}")));
    }
    let grid = pf.grid();
    let d = grid.dim();
    let pts = pf.points();
    let mapped: Vec<(SymMat, f64)> = pts
        .par_iter()
        .map(|m| {
            let dec = eig_sym(m);
            let vals: Vec<f64> = dec.values().iter().map(|&l| chi(l, sigma)).collect();
            let inv: Vec<f64> = vals.iter().map(|l| 1.0 / l).collect();
            let tr_log: f64 = vals.iter().map(|l| l.ln()).sum();
            (dec.compose(&inv), tr_log)
        })
        .collect();
    let inv = SymTensorField::from_points(grid, mapped.iter().map(|m| m.0).collect());
    let tr_log = ScalarField::from_values(grid, mapped.iter().map(|m| m.1).collect());
    let cell = grid.cell_volume();

    let mut lhs = 0.0;
    for axis in 0..d {
        let dp: Vec<Vec<f64>> = pf.comps.iter().map(|c| partial(c, axis).into_values()).collect();
        let di: Vec<Vec<f64>> = inv.comps.iter().map(|c| partial(c, axis).into_values()).collect();
        for i in 0..grid.len() {
            let a = SymMat::from_upper(d, &dp.iter().map(|c| c[i]).collect::<Vec<_>>());
            let b = SymMat::from_upper(d, &di.iter().map(|c| c[i]).collect::<Vec<_>>());
            lhs -= a.ddot(&b);
        }
    }
    lhs *= cell;
    let g = gradient(&tr_log);
    let rhs = lp_norm_vector(&g, 2.0).powi(2) / d as f64;
    Ok(TraceLogCheck {
        lhs,
        rhs,
        margin: lhs - rhs,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PositivityReport {
    pub min_rho: f64,
    pub min_eta: f64,
    /// Smallest eigenvalue of `T` over the grid; negative values are reported as is.
    pub min_eig_t: f64,
    /// `b max |div u|`, below 1 for admissible states.
    pub max_div_u_b: f64,
    /// `L^3.75` norm of the pointwise spectral norm of `T`.
    pub t_norm_l3_75: f64,
}

impl PositivityReport {
    pub const COLUMNS: [&'static str; 5] = ["min_rho", "min_eta", "min_eig_t", "max_div_u_b", "t_norm_l3_75"];

    pub fn values(&self) -> [f64; 5] {
        [self.min_rho, self.min_eta, self.min_eig_t, self.max_div_u_b, self.t_norm_l3_75]
    }

    /// Whether the state invariants hold.
    pub fn admissible(&self) -> bool {
        self.min_rho > 0.0 && self.min_eta >= 0.0 && self.min_eig_t > 0.0 && self.max_div_u_b < 1.0
    }
}

pub fn positivity_report(state: &State) -> PositivityReport {
    let eigs: Vec<(f64, f64)> = state
        .stress
        .points()
        .par_iter()
        .map(|m| {
            let dec = eig_sym(m);
            let v = dec.values();
            (v[v.len() - 1], v[0].abs().max(v[v.len() - 1].abs()))
        })
        .collect();
    let min_eig_t = eigs.iter().map(|e| e.0).fold(f64::INFINITY, f64::min);
    let spectral = ScalarField::from_values(state.grid(), eigs.iter().map(|e| e.1).collect());
    let divu = crate::fields::divergence(&state.u);
    PositivityReport {
        min_rho: state.rho.min(),
        min_eta: state.eta.min(),
        min_eig_t,
        max_div_u_b: state.params.b * divu.max_abs(),
        t_norm_l3_75: lp_norm(&spectral, STRESS_NORM_EXPONENT),
    }
}

/// `[chi_sigma(P)]^-1` pointwise, exposed for tests and bindings.
pub fn chi_sigma_inverse(p: &SymMat, sigma: f64) -> Result<SymMat> {
    apply_fn(|l| 1.0 / chi(l, sigma), p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::equilibrium_state;
    use crate::fields::{random_smooth_field, Grid};
    use crate::tensor::exp_sym;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn g2(n: usize) -> Grid {
        Grid::periodic(2, n).unwrap()
    }

    #[test]
    fn ledger_at_equilibrium() {
        let g = g2(16);
        let p = ModelParams::default();
        let s = equilibrium_state(1.0, 1.0, &p, &g).unwrap();
        let l = energy_ledger(&s);
        let vol = 4.0 * PI * PI;
        assert_eq!(l.kinetic, 0.0);
        assert!((l.polymer - vol).abs() < 1e-12);
        assert!((l.stress_trace - 0.5 * 2.0 * vol).abs() < 1e-12);
        assert_eq!(l.viscous_dissipation, 0.0);
        assert_eq!(l.barrier_dissipation, 0.0);
        assert_eq!(l.eta_dissipation, 0.0);
        assert!(energy_budget_residual(&l, &l, 1e-3).abs() < 1e-11);
        assert!(energy_identity_residual(&l, &l, 1e-3).abs() < 1e-11);
        assert!(trace_balance_residual(&s, &s, 1e-3).abs() < 1e-11);
    }

    #[test]
    fn ledger_kinetic_is_quadratic_and_forcing_power_matches() {
        let g = g2(32);
        let p = ModelParams::default();
        let mut s = equilibrium_state(1.0, 1.0, &p, &g).unwrap();
        s.u = VectorField::from_fn(&g, |x| [0.01 * x[1].sin(), 0.0, 0.0]);
        let k1 = energy_ledger(&s).kinetic;
        s.u = s.u.scale(2.0);
        let k2 = energy_ledger(&s).kinetic;
        assert!((k2 / k1 - 4.0).abs() < 1e-12);
        let f = VectorField::from_fn(&g, |x| [1e-3 * x[1].sin(), 0.0, 0.0]);
        let l = energy_ledger_with_force(&s, Some(&f));
        let exact = 0.02 * 1e-3 * 2.0 * PI * PI;
        assert!((l.forcing - exact).abs() < 1e-6 * exact);
    }

    #[test]
    fn relative_entropy_examples() {
        let g = g2(16);
        let p = ModelParams::default();
        let mut a = equilibrium_state(1.0, 1.0, &p, &g).unwrap();
        a.rho = random_smooth_field(&g, 1, 2.0, 0.3, Some(0.5));
        a.eta = random_smooth_field(&g, 2, 2.0, 0.3, Some(0.5));
        a.u = VectorField::from_fn(&g, |x| [x[1].sin(), x[0].cos(), 0.0]);
        let r = relative_entropy(&a, &a).unwrap();
        assert_eq!(r, RelEntropyReport::default());

        let mut b = a.clone();
        b.u = VectorField::zeros(&g);
        let r = relative_entropy(&a, &b).unwrap();
        let expect = integrate(&a.rho.mul(&a.u.magnitude().map(|m| m * m))) * 0.5;
        assert!((r.e1 - expect).abs() < 1e-12 * expect);
        assert_eq!(r.e2, 0.0);

        // gamma = 2, a = 1: the pressure gap is (rho - rho_ref)^2
        let mut c = a.clone();
        c.rho = random_smooth_field(&g, 5, 2.0, 0.3, Some(0.4));
        let r = relative_entropy(&a, &c).unwrap();
        let exact = integrate(&a.rho.sub(&c.rho).map(|v| v * v));
        assert!((r.e1 - exact).abs() < 1e-12 * exact);

        let other = equilibrium_state(1.0, 1.0, &p, &g2(8)).unwrap();
        assert!(matches!(relative_entropy(&a, &other), Err(Error::GridMismatch(_))));
    }

    #[test]
    fn convexity_gap_examples() {
        let p = ModelParams::default();
        assert_eq!(convexity_gap(1.2, 1.2, Potential::Fluid, &p, 0.1, 5.0).unwrap(), (0.0, 0.0));
        let (gap, bound) = convexity_gap(2.0, 0.5, Potential::Fluid, &p, 0.1, 5.0).unwrap();
        assert!((gap - 2.25).abs() < 1e-12 && (bound - 2.25).abs() < 1e-12);
        assert!(convexity_gap(-1.0, 0.5, Potential::Polymer, &p, 0.1, 5.0).is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..1000 {
            let x = rng.gen_range(0.1..5.0);
            let y = rng.gen_range(0.1..5.0);
            let (gap, bound) = convexity_gap(x, y, Potential::Polymer, &p, 0.1, 5.0).unwrap();
            assert!(gap >= bound - 1e-12);
        }
    }

    #[test]
    fn korn_closed_form_and_scale_invariance() {
        let g = g2(32);
        let v = VectorField::from_fn(&g, |x| [x[1].sin(), 0.0, 0.0]);
        let r = korn_ratio(&v, 2.0).unwrap();
        assert!((r - 2.0).abs() < 1e-12, "{r}");
        assert!((korn_ratio(&v.scale(-3.5), 2.0).unwrap() - r).abs() < 1e-12);
        assert!(matches!(korn_ratio(&VectorField::zeros(&g), 2.0), Err(Error::DegenerateField(_))));
        let w = VectorField {
            comps: (0..2).map(|i| random_smooth_field(&g, 40 + i, 2.0, 1.0, None)).collect(),
        };
        let r3 = korn_ratio(&w, 3.0).unwrap();
        assert!(r3.is_finite() && (korn_ratio(&w.scale(0.01), 3.0).unwrap() - r3).abs() < 1e-10 * r3);
    }

    #[test]
    fn korn_finite_for_rotation_like_fields() {
        // (sin y, -sin x) has zero symmetric gradient only where cos x = cos y
        let g = g2(32);
        for eps in [1e-3, 1e-1, 1.0] {
            let v = VectorField::from_fn(&g, |x| [x[1].sin() + eps * x[0].sin(), -x[0].sin(), 0.0]);
            assert!(korn_ratio(&v, 2.0).unwrap().is_finite());
        }
    }

    #[test]
    fn korn_monte_carlo_is_stable_under_reseeding() {
        let g = g2(32);
        let max_ratio = |base: u64| {
            (0..100)
                .map(|k| {
                    let v = VectorField {
                        comps: (0..2)
                            .map(|i| random_smooth_field(&g, base + 2 * k + i, 2.0, 1.0, None))
                            .collect(),
                    };
                    korn_ratio(&v, 2.0).unwrap()
                })
                .fold(0.0, f64::max)
        };
        let (a, b) = (max_ratio(1000), max_ratio(5000));
        assert!(a.is_finite() && ((a - b) / a).abs() < 0.05, "{a} {b}");
    }

    #[test]
    fn trace_log_examples() {
        let g = g2(32);
        let c = SymTensorField::from_fn(&g, |_| SymMat::from_upper(2, &[2.0, 0.3, 1.0]));
        let r = trace_log_inequality_check(&c, 0.1).unwrap();
        assert!(r.lhs.abs() < 1e-12 && r.rhs.abs() < 1e-12);

        let phi = |x: [f64; 3]| 1.0 + 0.3 * x[0].sin() * x[1].cos();
        let s = SymTensorField::from_fn(&g, |x| SymMat::scalar(2, phi(x)));
        let r = trace_log_inequality_check(&s, 0.1).unwrap();
        assert!(r.margin.abs() < 1e-8 * r.lhs, "{r:?}");
        assert!(trace_log_inequality_check(&s, 0.0).is_err());

        let e = random_smooth_field(&g, 1, 3.0, 0.5, None);
        let pf = SymTensorField::from_fn(&g, |_| SymMat::identity(2));
        let ev = e.values();
        let pts: Vec<SymMat> = pf
            .points()
            .iter()
            .enumerate()
            .map(|(i, m)| exp_sym(&m.scale(ev[i])))
            .collect();
        let r = trace_log_inequality_check(&SymTensorField::from_points(&g, pts), 0.1).unwrap();
        assert!(r.margin >= -1e-6);
    }

    #[test]
    fn positivity_examples() {
        let g = g2(16);
        let p = ModelParams { k: 2.0, ..Default::default() };
        let mut s = equilibrium_state(1.0, 1.5, &p, &g).unwrap();
        let r = positivity_report(&s);
        assert!((r.min_eig_t - 3.0).abs() < 1e-15);
        assert_eq!(r.max_div_u_b, 0.0);
        let vol = 4.0 * PI * PI;
        assert!((r.t_norm_l3_75 - 3.0 * vol.powf(1.0 / 3.75)).abs() < 1e-12);
        assert!(r.admissible());

        let mut pts = s.stress.points();
        pts[7] = SymMat::from_upper(2, &[1.0, 2.0, 1.0]);
        s.stress = SymTensorField::from_points(&g, pts);
        let r = positivity_report(&s);
        assert!((r.min_eig_t + 1.0).abs() < 1e-14);
        assert!(!r.admissible());
    }
}
