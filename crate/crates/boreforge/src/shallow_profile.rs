//! Shallow-water variable bundle (H, U, U₁, U₂, P, P₁, P₂) along an orbit.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::landscape::Landscape;
use crate::numerics::jet::Jet;
use crate::numerics::fd::d1_nonuniform;
use crate::orbit::OrbitSolution;
use crate::params::PhysParams;

/// Taylor order carried through the profile recursions.
pub const ORDER: usize = 10;
pub type J = Jet<ORDER>;

/// Taylor series of ρ at a point from (ρ, ρ′), via ρ″ = F(ρ) − G(ρ)ρ′.
pub fn rho_series(l: &Landscape, rho: f64, rho_prime: f64) -> J {
    let p = &l.params;
    let (flux, g) = (p.flux(), p.g());
    let cf = p.a() / (p.mu() * flux);
    let cg = 0.25 / p.mu();
    let mut r = J::constant(rho);
    r.c[1] = rho_prime;
    for k in 0..ORDER - 2 {
        let e1 = r.exp();
        let em = (-r).exp();
        let e2 = r.scale(2.0).exp();
        let f = (e1 + em.scale(0.25 * flux)).scale(-cf) + cf;
        let gs = em.scale(cg * flux) - e2.scale(cg * g / flux);
        let mut acc = f.c[k];
        for j in 0..=k {
            acc -= gs.c[j] * (k - j + 1) as f64 * r.c[k - j + 1];
        }
        r.c[k + 2] = acc / ((k + 1) * (k + 2)) as f64;
    }
    r
}

/// Local Taylor data of every profile variable at one x.
#[derive(Debug, Clone, Copy)]
pub struct ProfilePoint {
    pub x: f64,
    pub rho: J,
    pub h: J,
    pub u: J,
    pub u1: J,
    pub u2: J,
    pub p: J,
    pub p1: J,
    pub p2: J,
}

impl ProfilePoint {
    pub fn from_state(params: &PhysParams, l: &Landscape, x: f64, rho: f64, rho_prime: f64) -> Self {
        let (mu, a, g, flux) = (params.mu(), params.a(), params.g(), params.flux());
        let r = rho_series(l, rho, rho_prime);
        let h = r.exp();
        let u = (J::constant(flux) / h).scale(-1.0) + 4.0;
        let du = u.deriv();
        let ddu = du.deriv();
        let u1 = u.scale(a / mu);
        let p = h.scale(g) - du.scale(2.0 * mu);
        let bracket = u1.scale(mu) + (p - h.scale(g) - du.scale(2.0 * mu)) * h.deriv();
        let u2 = ddu - bracket / h.scale(mu);
        let p1 = u1.deriv().scale(-mu);
        let p2 = (u - 4.0) * ddu - du * du - (ddu.deriv() + u2.deriv()).scale(mu);
        ProfilePoint { x, rho: r, h, u, u1, u2, p, p1, p2 }
    }

    /// x, H, U, U1, U2, P, P1, P2
    pub fn row(&self) -> [f64; 8] {
        [
            self.x,
            self.h.value(),
            self.u.value(),
            self.u1.value(),
            self.u2.value(),
            self.p.value(),
            self.p1.value(),
            self.p2.value(),
        ]
    }
}

/// Closed-form values of the bundle at a constant state H.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EndValues {
    pub h: f64,
    pub u: f64,
    pub u1: f64,
    pub u2: f64,
    pub p: f64,
    pub p1: f64,
    pub p2: f64,
}

pub fn end_values(params: &PhysParams, h: f64) -> EndValues {
    let (mu, a, flux) = (params.mu(), params.a(), params.flux());
    let u = 4.0 - flux / h;
    EndValues {
        h,
        u,
        u1: (a / mu) * u,
        u2: -(a / mu) * (4.0 / h - flux / (h * h)),
        p: params.g() * h,
        p1: 0.0,
        p2: 0.0,
    }
}

#[derive(Debug, Clone)]
pub struct ShallowProfile {
    pub orbit: OrbitSolution,
    pub params: PhysParams,
}

pub fn build_profile(orbit: &OrbitSolution, params: &PhysParams) -> Result<ShallowProfile> {
    let o = &orbit.landscape.params;
    if (o.mu(), o.a(), o.g(), o.flux()) != (params.mu(), params.a(), params.g(), params.flux()) {
        return Err(Error::domain("profile parameters (mu, a, g, A) differ from the orbit's"));
    }
    if orbit.samples.len() < 4 {
        return Err(Error::domain(format!("orbit too short for a profile: {} samples", orbit.samples.len())));
    }
    Ok(ShallowProfile { orbit: orbit.clone(), params: *params })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LienardReport {
    /// sup |(4 − U)H − A|
    pub mass: f64,
    /// sup of the momentum equation residual
    pub momentum: f64,
    /// sup of the H-form residual
    pub h_form: f64,
    pub samples: usize,
}

impl ShallowProfile {
    pub fn x_range(&self) -> (f64, f64) {
        self.orbit.t_range()
    }

    pub fn at(&self, x: f64) -> ProfilePoint {
        let s = self.orbit.state_at(x);
        ProfilePoint::from_state(&self.params, &self.orbit.landscape, x, s[0], s[1])
    }

    /// Limits at x → −∞ and x → +∞.
    pub fn limits(&self) -> (EndValues, EndValues) {
        let (l, r) = self.orbit.rho_limits;
        (end_values(&self.params, l.exp()), end_values(&self.params, r.exp()))
    }

    /// Check the trajectory against the shallow-water system, differentiating
    /// the sampled ρ′ by local interpolation (independent of the ODE recursions).
    pub fn verify_lienard_equivalence(&self) -> Result<LienardReport> {
        let p = &self.params;
        let (mu, a, g, flux) = (p.mu(), p.a(), p.g(), p.flux());
        let s = &self.orbit.samples;
        let t: Vec<f64> = s.iter().map(|v| v.t).collect();
        let rp: Vec<f64> = s.iter().map(|v| v.rho_prime).collect();
        if s.len() < 7 {
            return Err(Error::domain("need at least 7 samples to differentiate"));
        }
        let rpp_all = d1_nonuniform(&t, &rp);
        let (mut mass, mut momentum, mut h_form) = (0.0f64, 0.0f64, 0.0f64);
        for (i, v) in s.iter().enumerate() {
            let h = v.rho.exp();
            let u = 4.0 - flux / h;
            let dh = h * v.rho_prime;
            let du = flux / h * v.rho_prime;
            let rpp = rpp_all[i];
            // (H U′)′ = A ρ″ and (H′/H)′ = ρ″
            let mom = h * (u - 4.0) * du + a * u - 4.0 * mu * flux * rpp + g * h * dh - 4.0 * a * h;
            let hf = 4.0 * mu * flux * rpp - 4.0 * a * (1.0 - h - flux / (4.0 * h))
                + (flux * flux / (h * h) - g * h) * dh;
            mass = mass.max(((4.0 - u) * h - flux).abs());
            momentum = momentum.max(mom.abs());
            h_form = h_form.max(hf.abs());
        }
        Ok(LienardReport { mass, momentum, h_form, samples: s.len() })
    }
}
