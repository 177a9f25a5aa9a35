//! Physical parameters, end states, tuning constants and the Froude number.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Admissible flux parameter range for parameter bundles.
pub const FLUX_MIN: f64 = 1e-9;
pub const FLUX_MAX: f64 = 1.0 - 1e-9;

/// Nondimensional parameter bundle (μ, a, g, A, σ, ε).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawParams", into = "RawParams")]
pub struct PhysParams {
    mu: f64,
    a: f64,
    g: f64,
    flux: f64,
    sigma: f64,
    eps: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawParams {
    mu: f64,
    a: f64,
    g: f64,
    #[serde(rename = "A")]
    flux: f64,
    sigma: f64,
    eps: f64,
}

impl TryFrom<RawParams> for PhysParams {
    type Error = Error;
    fn try_from(r: RawParams) -> Result<Self> {
        PhysParams::new(r.mu, r.a, r.g, r.flux, r.sigma, r.eps)
    }
}

impl From<PhysParams> for RawParams {
    fn from(p: PhysParams) -> Self {
        RawParams { mu: p.mu, a: p.a, g: p.g, flux: p.flux, sigma: p.sigma, eps: p.eps }
    }
}

impl PhysParams {
    pub fn new(mu: f64, a: f64, g: f64, flux: f64, sigma: f64, eps: f64) -> Result<Self> {
        let all = [mu, a, g, flux, sigma, eps];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("parameters must be finite"));
        }
        if mu <= 0.0 {
            return Err(Error::domain(format!("mu must be positive, got {mu}")));
        }
        if a <= 0.0 {
            return Err(Error::domain(format!("a must be positive, got {a}")));
        }
        if g < 0.0 {
            return Err(Error::domain(format!("g must be nonnegative, got {g}")));
        }
        if sigma < 0.0 {
            return Err(Error::domain(format!("sigma must be nonnegative, got {sigma}")));
        }
        if !(FLUX_MIN..=FLUX_MAX).contains(&flux) {
            return Err(Error::domain(format!("A must lie in [{FLUX_MIN:e}, 1 - 1e-9], got {flux}")));
        }
        if !(eps > 0.0 && eps < 1.0) {
            return Err(Error::domain(format!("eps must lie in (0, 1), got {eps}")));
        }
        Ok(PhysParams { mu, a, g, flux, sigma, eps })
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }
    pub fn a(&self) -> f64 {
        self.a
    }
    pub fn g(&self) -> f64 {
        self.g
    }
    /// The flux parameter A.
    pub fn flux(&self) -> f64 {
        self.flux
    }
    pub fn sigma(&self) -> f64 {
        self.sigma
    }
    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn with_eps(&self, eps: f64) -> Result<Self> {
        Self::new(self.mu, self.a, self.g, self.flux, self.sigma, eps)
    }
    pub fn with_g(&self, g: f64) -> Result<Self> {
        Self::new(self.mu, self.a, g, self.flux, self.sigma, self.eps)
    }
    pub fn with_sigma(&self, sigma: f64) -> Result<Self> {
        Self::new(self.mu, self.a, self.g, self.flux, sigma, self.eps)
    }

    pub fn equilibria(&self) -> Equilibria {
        // validated flux is always inside the open interval
        equilibria(self.flux).expect("validated flux")
    }

    pub fn tuned(&self) -> TunedConstants {
        tune(self)
    }

    /// Frame speed 4 + ε²γ̄ of the traveling coordinates.
    pub fn frame_speed(&self) -> f64 {
        4.0 + self.eps * self.eps * self.tuned().gamma_bar
    }
}

/// End-state heights H± and their logarithms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Equilibria {
    pub h_minus: f64,
    pub h_plus: f64,
    pub rho_minus: f64,
    pub rho_plus: f64,
}

/// Roots of 4H − 4H² = A.
pub fn equilibria(flux: f64) -> Result<Equilibria> {
    if !(flux > 0.0 && flux < 1.0) {
        return Err(Error::domain(format!("A must lie in (0, 1), got {flux}")));
    }
    let h_plus = 0.5 * (1.0 + (1.0 - flux).sqrt());
    // product form avoids cancellation for small A
    let h_minus = flux / (4.0 * h_plus);
    Ok(Equilibria { h_minus, h_plus, rho_minus: h_minus.ln(), rho_plus: h_plus.ln() })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TunedConstants {
    pub gamma_bar: f64,
    pub a_bar: f64,
    pub a_hat: f64,
}

impl TunedConstants {
    /// The flux cubic (4 + ε²γ̄)H − 4H² − ε²(4a/3μ)H³.
    pub fn cubic(&self, p: &PhysParams, h: f64) -> f64 {
        let e2 = p.eps * p.eps;
        (4.0 + e2 * self.gamma_bar) * h - 4.0 * h * h - e2 * (4.0 * p.a / (3.0 * p.mu)) * h * h * h
    }
}

pub fn tune(p: &PhysParams) -> TunedConstants {
    let eq = p.equilibria();
    let (hp, hm) = (eq.h_plus, eq.h_minus);
    let k = 4.0 * p.a / (3.0 * p.mu);
    let gamma_bar = k * (hp * hp + hp * hm + hm * hm);
    let a_bar = k * (hp * hp * hm + hp * hm * hm);
    let a_hat = p.flux + p.eps * p.eps * a_bar;
    let t = TunedConstants { gamma_bar, a_bar, a_hat };
    debug_assert!((t.cubic(p, hp) - a_hat).abs() <= 1e-12 * a_hat.max(1.0));
    debug_assert!((t.cubic(p, hm) - a_hat).abs() <= 1e-12 * a_hat.max(1.0));
    t
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Froude {
    pub value: f64,
    /// Set when g = 0 and the number is the +∞ supercritical limit.
    pub infinite: bool,
}

/// Fr = √(8/g).
pub fn froude(g: f64) -> Froude {
    if g == 0.0 {
        Froude { value: f64::INFINITY, infinite: true }
    } else {
        Froude { value: (8.0 / g).sqrt(), infinite: false }
    }
}

/// Dimensional inputs. Units: viscosity `mu_d`, bottom slope parameter `kappa`,
/// slip `a_d`, gravity `g_d`, surface tension `sigma_d`, frame speed `gamma`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DimensionalParams {
    #[serde(rename = "mu")]
    pub mu_d: f64,
    pub kappa: f64,
    #[serde(rename = "a")]
    pub a_d: f64,
    #[serde(rename = "g")]
    pub g_d: f64,
    #[serde(rename = "sigma")]
    pub sigma_d: f64,
    pub gamma: f64,
}

impl DimensionalParams {
    pub fn length_scale(&self) -> f64 {
        self.a_d * self.gamma / self.kappa
    }

    pub fn velocity_scale(&self) -> f64 {
        self.gamma / 4.0
    }

    pub fn critical_speed(&self) -> f64 {
        2.0 * self.g_d * self.a_d / self.kappa
    }

    /// +1 (ebbing) above the critical speed, −1 (surging) below.
    pub fn chirality(&self) -> i8 {
        if self.gamma > self.critical_speed() { 1 } else { -1 }
    }

    /// Inverse of the nondimensionalization for a given speed and κ.
    pub fn from_nondimensional(p: &PhysParams, gamma: f64, kappa: f64) -> Self {
        let a_d = p.a * gamma / 4.0;
        DimensionalParams {
            mu_d: p.mu * a_d * gamma * gamma / (4.0 * kappa),
            kappa,
            a_d,
            g_d: p.g * kappa * gamma / (16.0 * a_d),
            sigma_d: p.sigma * gamma * gamma / 16.0,
            gamma,
        }
    }
}

/// Nondimensionalize and return the dimensional relative velocity flux.
pub fn dimensionalize(dp: &DimensionalParams, flux: f64, eps: f64) -> Result<(PhysParams, f64)> {
    let DimensionalParams { mu_d, kappa, a_d, g_d, sigma_d, gamma } = *dp;
    if [mu_d, kappa, a_d, gamma].iter().any(|v| !(*v > 0.0)) || g_d < 0.0 || sigma_d < 0.0 {
        return Err(Error::domain("dimensional parameters must be positive (g, sigma nonnegative)"));
    }
    let crit = dp.critical_speed();
    if (gamma - crit).abs() <= 1e-12 * gamma.max(crit) {
        return Err(Error::domain("Fr = 1 excluded: frame speed equals the critical speed 2 g a / kappa"));
    }
    let mu = 4.0 * kappa * mu_d / (a_d * gamma * gamma);
    let a = 4.0 * a_d / gamma;
    let g = 16.0 * g_d * a_d / (kappa * gamma);
    let sigma = 16.0 * sigma_d / (gamma * gamma);
    let p = PhysParams::new(mu, a, g, flux, sigma, eps)?;
    let eq = p.equilibria();
    let (hp, hm) = (eq.h_plus, eq.h_minus);
    let phi = -eps * (a_d * gamma * gamma / (4.0 * kappa)) * flux
        - eps.powi(3) * (a_d.powi(3) * gamma.powi(3) / (3.0 * kappa * kappa * mu_d)) * (hp * hp * hm + hp * hm * hm);
    Ok((p, phi))
}
