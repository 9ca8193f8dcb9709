//! Scalar constitutive laws: fluid pressure, polymer pressure, the divergence
//! barrier and the pointwise power-law viscous stress.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::SymMat;

/// Physical constants and regularization levels of the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelParams {
    /// Power-law exponent of the shear stress.
    pub r: f64,
    /// Barrier parameter: admissible divergences lie in (-1/b, 1/b).
    pub b: f64,
    pub mu0: f64,
    /// Pressure amplitude in `p = a rho^gamma`.
    pub a: f64,
    pub gamma: f64,
    pub k: f64,
    #[serde(rename = "L")]
    pub ell: f64,
    /// Polymer relaxation time.
    pub lambda: f64,
    pub zeta: f64,
    /// Diffusion coefficient for both eta and T.
    pub epsilon: f64,
    /// Log-trace regularization strength.
    pub alpha: f64,
    /// Eigenvalue cutoff for the extra stress.
    pub sigma: f64,
    /// Width of the affine continuation of the barrier.
    pub delta: f64,
    /// Mollification level of the initial data.
    pub theta: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        ModelParams {
            r: 2.5,
            b: 1.0,
            mu0: 0.05,
            a: 1.0,
            gamma: 2.0,
            k: 1.0,
            ell: 1.0,
            lambda: 1.0,
            zeta: 1.0,
            epsilon: 0.05,
            alpha: 0.0,
            sigma: 0.0,
            delta: 0.0,
            theta: 0.0,
        }
    }
}

/// Smallest power-law exponent for which the a priori estimates close.
pub const R_MIN: f64 = 2.5;

impl ModelParams {
    /// Checks the parameter invariants; errors carry the offending field path.
    pub fn validate(&self) -> Result<()> {
        let path = |f: &str| format!("params.{f}");
        if !(self.r >= R_MIN) {
            return Err(Error::config(
                path("r"),
                format!("power-law exponent r = {} is below the existence threshold r >= 5/2", self.r),
            ));
        }
        for (name, v) in [
            ("b", self.b),
            ("mu0", self.mu0),
            ("a", self.a),
            ("k", self.k),
            ("L", self.ell),
            ("lambda", self.lambda),
            ("zeta", self.zeta),
            ("epsilon", self.epsilon),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(path(name), format!("must be strictly positive, got {v}")));
            }
        }
        if !(self.gamma > 1.0 && self.gamma.is_finite()) {
            return Err(Error::config(path("gamma"), format!("pressure exponent must exceed 1, got {}", self.gamma)));
        }
        for (name, v) in [
            ("alpha", self.alpha),
            ("sigma", self.sigma),
            ("delta", self.delta),
            ("theta", self.theta),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::config(path(name), format!("must be non-negative, got {v}")));
            }
        }
        if self.delta >= 1.0 / self.b {
            return Err(Error::config(path("delta"), format!("must be below 1/b = {}", 1.0 / self.b)));
        }
        if self.sigma > 0.0 && self.sigma >= self.alpha.max(self.theta) {
            return Err(Error::config(
                path("sigma"),
                format!("cutoff sigma = {} must be below max(alpha, theta)", self.sigma),
            ));
        }
        Ok(())
    }

    /// Upper bound `1/b` for the velocity divergence.
    pub fn div_bound(&self) -> f64 {
        1.0 / self.b
    }

    /// The barrier is evaluated in its affine-continued form whenever `delta > 0`.
    pub fn barrier_regularized(&self) -> bool {
        self.delta > 0.0
    }
}

/// Fluid pressure `p = a rho^gamma` and its potential `H = P = a rho^gamma / (gamma - 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PressureLaw {
    pub p: f64,
    pub potential: f64,
    pub dpotential: f64,
    pub d2potential: f64,
}

pub fn fluid_pressure(rho: f64, params: &ModelParams) -> Result<PressureLaw> {
    if !(rho > 0.0) {
        return Err(Error::Domain(format!("density must be positive, got {rho}")));
    }
    let (a, g) = (params.a, params.gamma);
    let rg = rho.powf(g);
    Ok(PressureLaw {
        p: a * rg,
        potential: a * rg / (g - 1.0),
        dpotential: a * g * rg / ((g - 1.0) * rho),
        d2potential: a * g * rg / (rho * rho),
    })
}

/// Pressure without the positivity check; used pointwise on fields after validation.
#[inline]
pub fn pressure(rho: f64, params: &ModelParams) -> f64 {
    params.a * rho.powf(params.gamma)
}

/// Polymer pressure `q = kL eta + zeta eta^2` and its potential `G = kL eta ln eta + zeta eta^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolymerLaw {
    pub q: f64,
    pub g: f64,
    pub dg: f64,
    pub d2g: f64,
}

pub fn polymer_laws(eta: f64, params: &ModelParams) -> Result<PolymerLaw> {
    if !(eta >= 0.0) {
        return Err(Error::Domain(format!("polymer density must be non-negative, got {eta}")));
    }
    let kl = params.k * params.ell;
    let z = params.zeta;
    if eta == 0.0 {
        return Ok(PolymerLaw {
            q: 0.0,
            g: 0.0,
            dg: f64::NEG_INFINITY,
            d2g: f64::INFINITY,
        });
    }
    let ln = eta.ln();
    Ok(PolymerLaw {
        q: kl * eta + z * eta * eta,
        g: kl * eta * ln + z * eta * eta,
        dg: kl * (ln + 1.0) + 2.0 * z * eta,
        d2g: kl / eta + 2.0 * z,
    })
}

#[inline]
pub fn polymer_pressure(eta: f64, params: &ModelParams) -> f64 {
    params.k * params.ell * eta + params.zeta * eta * eta
}

/// `G(eta)` with `eta ln eta` continued by 0 at the origin.
#[inline]
pub fn polymer_potential(eta: f64, params: &ModelParams) -> f64 {
    let xlogx = if eta > 0.0 { eta * eta.ln() } else { 0.0 };
    params.k * params.ell * xlogx + params.zeta * eta * eta
}

/// Barrier potential `Lambda(z) = -ln(1 - b^2 z^2) / b^2` with `Lambda' = z beta(z)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BarrierValue {
    pub lam: f64,
    pub lam_prime: f64,
    /// `beta(z) = Lambda'(z) / z`, continuous at 0.
    pub beta: f64,
    pub lam_second: f64,
}

fn barrier_smooth(z: f64, b: f64) -> BarrierValue {
    let b2 = b * b;
    let w = 1.0 - b2 * z * z;
    let beta = 2.0 / w;
    BarrierValue {
        lam: -(-b2 * z * z).ln_1p() / b2,
        lam_prime: z * beta,
        beta,
        lam_second: 2.0 * (1.0 + b2 * z * z) / (w * w),
    }
}

/// Evaluates the barrier at divergence value `z`.
///
/// In regularized mode the potential is continued affinely outside
/// `|z| <= 1/b - delta`, so every real `z` is admissible.
pub fn barrier(z: f64, params: &ModelParams, regularized: bool) -> Result<BarrierValue> {
    let b = params.b;
    let bound = 1.0 / b;
    if regularized && params.delta > 0.0 {
        let z0 = bound - params.delta;
        if z.abs() <= z0 {
            return Ok(barrier_smooth(z, b));
        }
        let seam = z0.copysign(z);
        let at = barrier_smooth(seam, b);
        let lam = at.lam + at.lam_prime * (z - seam);
        return Ok(BarrierValue {
            lam,
            lam_prime: at.lam_prime,
            beta: at.lam_prime / z,
            lam_second: 0.0,
        });
    }
    if !(z.abs() < bound) {
        return Err(Error::Barrier { value: z.abs(), bound });
    }
    Ok(barrier_smooth(z, b))
}

/// Power-law shear factor `2 mu0 (1 + |Dd|^2)^((r-2)/2)`.
#[inline]
pub fn shear_coefficient(dd_norm_sq: f64, params: &ModelParams) -> f64 {
    2.0 * params.mu0 * (1.0 + dd_norm_sq).powf(0.5 * (params.r - 2.0))
}

/// `S = 2 mu0 (1 + |Dd|^2)^((r-2)/2) Dd + Lambda'(div u) I`.
pub fn viscous_stress(dd: &SymMat, divu: f64, params: &ModelParams, regularized: bool) -> Result<SymMat> {
    let bar = barrier(divu, params, regularized)?;
    let coef = shear_coefficient(dd.frobenius_sq(), params);
    Ok(dd.scale(coef).add(&SymMat::scalar(dd.dim(), bar.lam_prime)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{deviatoric, SquareMat};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    #[test]
    fn pressure_closed_form() {
        let p = ModelParams::default();
        let law = fluid_pressure(2.0, &p).unwrap();
        assert_eq!((law.p, law.potential, law.dpotential, law.d2potential), (4.0, 4.0, 4.0, 2.0));
        let tiny = fluid_pressure(1e-12, &p).unwrap();
        assert!(tiny.p < 1e-23);
        assert!(matches!(fluid_pressure(0.0, &p), Err(Error::Domain(_))));
        assert!(matches!(fluid_pressure(-1.0, &p), Err(Error::Domain(_))));
    }

    #[test]
    fn pressure_potential_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for gamma in [2.0, 1.4, 3.0] {
            let params = ModelParams { gamma, a: 1.7, ..Default::default() };
            for _ in 0..1000 {
                let rho: f64 = rng.gen_range(0.1..10.0);
                let l = fluid_pressure(rho, &params).unwrap();
                // rho H' - H = a rho^g (g/(g-1) - 1/(g-1)) = a rho^g
                assert!(rel(rho * l.dpotential - l.potential, l.p) < 1e-12);
                assert!(l.d2potential > 0.0);
            }
        }
    }

    #[test]
    fn polymer_closed_form() {
        let p = ModelParams::default();
        let l = polymer_laws(1.0, &p).unwrap();
        assert_eq!((l.q, l.g, l.dg), (2.0, 1.0, 3.0));
        let z = polymer_laws(0.0, &p).unwrap();
        assert_eq!((z.q, z.g), (0.0, 0.0));
        assert!(matches!(polymer_laws(-0.1, &p), Err(Error::Domain(_))));
    }

    #[test]
    fn polymer_pressure_identity_and_convexity() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let params = ModelParams { k: 0.7, ell: 1.3, zeta: 0.4, ..Default::default() };
        for _ in 0..1000 {
            let eta: f64 = rng.gen_range(0.1..5.0);
            let l = polymer_laws(eta, &params).unwrap();
            assert!(rel(eta * l.dg - l.g, l.q) < 1e-12);
            assert!(l.d2g > 0.0);
        }
    }

    #[test]
    fn barrier_values() {
        let p = ModelParams::default();
        let z0 = barrier(0.0, &p, false).unwrap();
        assert_eq!((z0.lam, z0.lam_prime, z0.beta), (0.0, 0.0, 2.0));
        // -ln(0.75) to 17 digits
        let v = barrier(0.5, &p, false).unwrap();
        assert!((v.lam - 0.287_682_072_451_780_9).abs() < 1e-15);
        assert!(matches!(barrier(1.0, &p, false), Err(Error::Barrier { .. })));
        assert!(matches!(barrier(-1.3, &p, false), Err(Error::Barrier { .. })));
    }

    #[test]
    fn regularized_barrier_affine_leg() {
        let p = ModelParams { delta: 0.1, ..Default::default() };
        let at = barrier(0.9, &p, false).unwrap();
        let v = barrier(2.0, &p, true).unwrap();
        assert!((v.lam - (at.lam + at.lam_prime * 1.1)).abs() < 1e-14);
        assert_eq!(v.lam_prime, at.lam_prime);
        let m = barrier(-2.0, &p, true).unwrap();
        assert!((m.lam - v.lam).abs() < 1e-14);
        // inside the seam the two forms coincide
        assert_eq!(barrier(0.3, &p, true).unwrap(), barrier(0.3, &p, false).unwrap());
    }

    #[test]
    fn barrier_is_convex_and_dominates_regularization() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = ModelParams { b: 1.5, delta: 0.05, ..Default::default() };
        let bound = 1.0 / p.b;
        for _ in 0..1000 {
            let x: f64 = rng.gen_range(-bound..bound) * 0.999;
            let y: f64 = rng.gen_range(-bound..bound) * 0.999;
            let mid = barrier(0.5 * (x + y), &p, false).unwrap().lam;
            let bx = barrier(x, &p, false).unwrap();
            let by = barrier(y, &p, false).unwrap();
            assert!(mid <= 0.5 * (bx.lam + by.lam) + 1e-12);
            let rx = barrier(x, &p, true).unwrap();
            let ry = barrier(y, &p, true).unwrap();
            let rmid = barrier(0.5 * (x + y), &p, true).unwrap().lam;
            assert!(rmid <= 0.5 * (rx.lam + ry.lam) + 1e-12);
            assert!(rx.lam <= bx.lam + 1e-15);
            if x.abs() <= bound - p.delta {
                assert_eq!(rx.lam, bx.lam);
            }
            assert!(bx.lam_prime * x >= bx.lam - 1e-15);
            assert!(rx.lam_prime * x >= rx.lam - 1e-15);
        }
    }

    #[test]
    fn derivatives_match_central_differences() {
        let p = ModelParams { b: 1.2, ..Default::default() };
        let h = 1e-5;
        for &z in &[-0.7, -0.3, 0.0, 0.2, 0.6] {
            let f = |z| barrier(z, &p, false).unwrap().lam;
            let fd = (f(z + h) - f(z - h)) / (2.0 * h);
            assert!((fd - barrier(z, &p, false).unwrap().lam_prime).abs() < 1e-8);
            let g = |z| barrier(z, &p, false).unwrap().lam_prime;
            let fd2 = (g(z + h) - g(z - h)) / (2.0 * h);
            let exact = barrier(z, &p, false).unwrap().lam_second;
            assert!((fd2 - exact).abs() < 1e-6 * exact);
        }
        for &rho in &[0.3, 1.0, 4.0] {
            let h_of = |r| fluid_pressure(r, &p).unwrap().potential;
            let fd = (h_of(rho + h) - h_of(rho - h)) / (2.0 * h);
            assert!((fd - fluid_pressure(rho, &p).unwrap().dpotential).abs() < 1e-8 * (1.0 + rho));
        }
        for &eta in &[0.2, 1.0, 3.0] {
            let g_of = |e| polymer_laws(e, &p).unwrap().g;
            let fd = (g_of(eta + h) - g_of(eta - h)) / (2.0 * h);
            assert!((fd - polymer_laws(eta, &p).unwrap().dg).abs() < 1e-8);
        }
    }

    fn random_dev(rng: &mut ChaCha8Rng, dim: usize, scale: f64) -> SymMat {
        let mut g = SquareMat::zeros(dim);
        for i in 0..dim {
            for j in 0..dim {
                g.set(i, j, rng.gen_range(-scale..scale));
            }
        }
        deviatoric(&g)
    }

    #[test]
    fn viscous_stress_examples() {
        let p = ModelParams::default();
        let zero = viscous_stress(&SymMat::zeros(3), 0.0, &p, false).unwrap();
        assert_eq!(zero.max_abs(), 0.0);
        let newtonian = ModelParams { r: 2.0, mu0: 1.0, ..Default::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let d = random_dev(&mut rng, 3, 1.0);
        let s = viscous_stress(&d, 0.0, &newtonian, false).unwrap();
        assert!(s.sub(&d.scale(2.0)).max_abs() < 1e-15);
        assert!(matches!(viscous_stress(&d, 1.0, &p, false), Err(Error::Barrier { .. })));
    }

    #[test]
    fn viscous_stress_dissipation_and_monotonicity() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for r in [2.5, 3.0, 4.0] {
            let p = ModelParams { r, mu0: 0.7, ..Default::default() };
            for _ in 0..2000 {
                let d1 = random_dev(&mut rng, 3, 3.0);
                let d2 = random_dev(&mut rng, 3, 3.0);
                let s1 = viscous_stress(&d1, 0.0, &p, false).unwrap();
                let s2 = viscous_stress(&d2, 0.0, &p, false).unwrap();
                let diss = s1.ddot(&d1);
                let expected = shear_coefficient(d1.frobenius_sq(), &p) * d1.frobenius_sq();
                assert!(rel(diss, expected) < 1e-12 || expected == 0.0);
                assert!(diss >= 0.0);
                assert!(s1.sub(&s2).ddot(&d1.sub(&d2)) >= 0.0);
            }
        }
    }

    #[test]
    fn params_validation() {
        assert!(ModelParams::default().validate().is_ok());
        let bad = ModelParams { r: 2.0, ..Default::default() };
        match bad.validate() {
            Err(Error::Config { path, .. }) => assert_eq!(path, "params.r"),
            other => panic!("unexpected {other:?}"),
        }
        let bad = ModelParams { delta: 1.0, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = ModelParams { sigma: 0.1, ..Default::default() };
        assert!(bad.validate().is_err());
        let ok = ModelParams { sigma: 0.1, alpha: 0.5, ..Default::default() };
        assert!(ok.validate().is_ok());
    }
}
