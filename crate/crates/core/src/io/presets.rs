//! Initial states for the named scenarios and the matching forcing.
//!
//! Random data is drawn on a canonical grid of at most 16 points per axis and then
//! spectrally interpolated, so every resolution sees the same band-limited fields.
//! Floors use the coefficient sum as a pointwise bound; velocity amplitudes are
//! measured on a fixed dense grid.

use crate::constitutive::ModelParams;
use crate::dynamics::{equilibrium_state, BodyForce, Forcing, NoForcing, State};
use crate::error::Result;
use crate::fields::{
    divergence, mollify, random_smooth_field, resample, Grid, ScalarField, SymTensorField, VectorField,
};
use crate::manufactured::Manufactured;
use crate::tensor::{min_eig, sym_index, sym_len};

use super::config::{ForcingSpec, Scenario};

pub const CANONICAL_N: usize = 16;
pub const DENSITY_FLOOR: f64 = 0.5;
pub const SHEAR_AMPLITUDE: f64 = 1e-2;
pub const RANDOM_VELOCITY: f64 = 0.1;
const DECAY: f64 = 3.0;

fn canonical(grid: &Grid) -> Result<Grid> {
    Grid::new(grid.dim(), grid.n().min(CANONICAL_N), grid.length())
}

fn dense(grid: &Grid) -> Result<Grid> {
    Grid::new(grid.dim(), if grid.dim() == 2 { 64 } else { 32 }, grid.length())
}

fn dense_speed(u: &VectorField, dense: &Grid) -> Result<f64> {
    let comps = u.comps.iter().map(|c| resample(c, dense)).collect::<Result<_>>()?;
    Ok(VectorField { comps }.max_abs())
}

/// `sum |c_m|` over nonzero modes: bounds `|f - mean f|` everywhere, on every grid.
fn oscillation_bound(f: &ScalarField) -> f64 {
    f.coefficients().iter().skip(1).map(|c| c.norm()).sum()
}

fn mean(f: &ScalarField) -> f64 {
    f.coefficients()[0].re
}

/// Band-limited field shifted so that its guaranteed lower bound is `floor`.
fn floored(g: &Grid, seed: u64, amplitude: f64, floor: f64) -> ScalarField {
    let f = random_smooth_field(g, seed, DECAY, amplitude, None);
    let shift = floor - (mean(&f) - oscillation_bound(&f));
    f.map(|v| v + shift)
}

/// Divergence-free part of `v`.
pub fn leray_projection(v: &VectorField) -> VectorField {
    let grid = v.grid().clone();
    let d = grid.dim();
    let hats: Vec<_> = v.comps.iter().map(|c| c.coefficients().into_owned()).collect();
    let mut out = hats.clone();
    for i in 0..grid.len() {
        let k = grid.wavevector(i);
        let k2 = grid.wavenumber_sq(i);
        if k2 == 0.0 {
            continue;
        }
        let kdotv = (0..d).fold(num_complex::Complex64::new(0.0, 0.0), |s, a| s + hats[a][i] * k[a]);
        for a in 0..d {
            out[a][i] = hats[a][i] - kdotv * (k[a] / k2);
        }
    }
    VectorField {
        comps: out
            .into_iter()
            .map(|c| ScalarField::from_coefficients(&grid, c).to_physical())
            .collect(),
    }
}

fn random_vector(g: &Grid, seed: u64) -> VectorField {
    VectorField {
        comps: (0..g.dim())
            .map(|a| random_smooth_field(g, seed.wrapping_add(a as u64), DECAY, 1.0, None))
            .collect(),
    }
}

fn shear_perturbation(grid: &Grid, params: &ModelParams, seed: u64) -> Result<State> {
    let cg = canonical(grid)?;
    let dg = dense(grid)?;
    let mut s = equilibrium_state(1.0, 1.0, params, &cg)?;
    let u = leray_projection(&random_vector(&cg, seed));
    let umax = dense_speed(&u, &dg)?;
    s.u = u.scale(SHEAR_AMPLITUDE / umax);
    s.resample(grid)
}

fn random_smooth(grid: &Grid, params: &ModelParams, seed: u64) -> Result<State> {
    let cg = canonical(grid)?;
    let dg = dense(grid)?;
    let d = grid.dim();
    let seed = seed.wrapping_mul(64);
    let rho = floored(&cg, seed, 0.3, DENSITY_FLOOR);
    let eta = floored(&cg, seed + 1, 0.3, DENSITY_FLOOR);

    let u = random_vector(&cg, seed + 2);
    let umax = dense_speed(&u, &dg)?;
    let divmax = oscillation_bound(&divergence(&u));
    let scale = (RANDOM_VELOCITY / umax).min(0.5 * params.div_bound() / divmax);
    let u = u.scale(scale);

    let perturb = SymTensorField {
        comps: (0..sym_len(d))
            .map(|c| random_smooth_field(&cg, seed + 8 + c as u64, DECAY, 1.0, None))
            .collect(),
    };
    // |P|_F^2 <= sum over the full matrix of squared entry bounds
    let pmax = (0..d)
        .flat_map(|i| (0..d).map(move |j| (i, j)))
        .map(|(i, j)| oscillation_bound(&perturb.comps[sym_index(d, i, j)]).powi(2))
        .sum::<f64>()
        .sqrt();
    let perturb = perturb.scale(0.5 * params.k * DENSITY_FLOOR / pmax);
    let mut stress = perturb;
    for a in 0..d {
        let c = sym_index(d, a, a);
        stress.comps[c] = stress.comps[c].add(&eta.scale(params.k));
    }

    let theta = params.theta;
    let m = |f: &ScalarField| mollify(f, theta);
    let state = State::new(
        0.0,
        m(&rho),
        VectorField {
            comps: u.comps.iter().map(m).collect(),
        },
        m(&eta).map(|v| v + theta),
        SymTensorField {
            comps: stress.comps.iter().map(m).collect(),
        }
        .add(&SymTensorField::scalar(&cg, theta)),
        params.clone(),
    )?;
    state.resample(grid)
}

/// Initial state of a scenario. `twin-run` uses the random-smooth data.
pub fn preset(scenario: Scenario, grid: &Grid, params: &ModelParams, seed: u64) -> Result<State> {
    match scenario {
        Scenario::Equilibrium => equilibrium_state(1.0, 1.0, params, grid),
        Scenario::ShearPerturbation => shear_perturbation(grid, params, seed),
        Scenario::RandomSmooth | Scenario::TwinRun => random_smooth(grid, params, seed),
        Scenario::Manufactured => Manufactured::standard(grid.dim(), params).state(grid, 0.0),
    }
}

/// Forcing for a scenario: the manufactured sources, or the configured body force.
pub fn forcing(scenario: Scenario, spec: &ForcingSpec, dim: usize, params: &ModelParams) -> Box<dyn Forcing> {
    if scenario == Scenario::Manufactured {
        return Box::new(Manufactured::standard(dim, params));
    }
    match *spec {
        ForcingSpec::None => Box::new(NoForcing),
        ForcingSpec::Shear { amplitude, mode } => {
            let m = mode as f64;
            Box::new(BodyForce(move |x: [f64; 3], _t: f64| [amplitude * (m * x[1]).sin(), 0.0, 0.0]))
        }
        ForcingSpec::Compressive { amplitude, mode } => {
            let m = mode as f64;
            Box::new(BodyForce(move |x: [f64; 3], _t: f64| {
                let mut f = [0.0; 3];
                for a in 0..dim {
                    f[a] = amplitude * (m * x[a]).sin();
                }
                f
            }))
        }
    }
}

/// Pointwise SPD check used by the presets' tests and by `check`.
pub fn min_stress_eigenvalue(t: &SymTensorField) -> f64 {
    t.points().iter().map(min_eig).fold(f64::INFINITY, f64::min)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagnostics::positivity_report;

    fn grid(n: usize) -> Grid {
        Grid::periodic(2, n).unwrap()
    }

    #[test]
    fn equilibrium_preset_is_admissible() {
        let p = ModelParams::default();
        let s = preset(Scenario::Equilibrium, &grid(16), &p, 0).unwrap();
        let r = positivity_report(&s);
        assert!(r.admissible());
        assert!((r.min_eig_t - p.k).abs() < 1e-14);
    }

    #[test]
    fn random_smooth_respects_floors_and_bounds() {
        let mut p = ModelParams::default();
        p.b = 2.0;
        for n in [16, 32, 48] {
            let s = preset(Scenario::RandomSmooth, &grid(n), &p, 7).unwrap();
            assert!(s.rho.min() >= DENSITY_FLOOR, "{}", s.rho.min());
            assert!(s.eta.min() >= DENSITY_FLOOR);
            assert!(s.u.max_abs() <= RANDOM_VELOCITY * 1.02);
            assert!(divergence(&s.u).max_abs() <= 0.5 * p.div_bound());
            assert!(min_stress_eigenvalue(&s.stress) >= 0.5 * p.k * DENSITY_FLOOR * (1.0 - 1e-9));
        }
    }

    #[test]
    fn random_smooth_is_resolution_independent() {
        let p = ModelParams::default();
        let a = preset(Scenario::RandomSmooth, &grid(32), &p, 3).unwrap();
        let b = preset(Scenario::RandomSmooth, &grid(48), &p, 3).unwrap();
        let b_on_a = b.resample(a.grid()).unwrap();
        assert!(a.max_difference(&b_on_a) < 1e-13);
        let c = preset(Scenario::RandomSmooth, &grid(32), &p, 4).unwrap();
        assert!(a.max_difference(&c) > 1e-3);
    }

    #[test]
    fn mollification_shifts_eta_and_stress() {
        let mut p = ModelParams::default();
        let a = preset(Scenario::RandomSmooth, &grid(16), &p, 1).unwrap();
        p.theta = 0.1;
        let b = preset(Scenario::RandomSmooth, &grid(16), &p, 1).unwrap();
        assert!((integrate_mean(&b.eta) - integrate_mean(&a.eta) - 0.1).abs() < 1e-12);
        assert!(b.rho.max() < a.rho.max());
    }

    fn integrate_mean(f: &ScalarField) -> f64 {
        crate::fields::integrate(f) / f.grid().volume()
    }

    #[test]
    fn shear_preset_is_solenoidal() {
        let p = ModelParams::default();
        let s = preset(Scenario::ShearPerturbation, &grid(32), &p, 5).unwrap();
        assert!(divergence(&s.u).max_abs() < 1e-12);
        assert!((s.u.max_abs() - SHEAR_AMPLITUDE).abs() < 2e-2 * SHEAR_AMPLITUDE);
        let g3 = Grid::periodic(3, 16).unwrap();
        let s3 = preset(Scenario::ShearPerturbation, &g3, &p, 5).unwrap();
        assert!(divergence(&s3.u).max_abs() < 1e-12);
    }
}
