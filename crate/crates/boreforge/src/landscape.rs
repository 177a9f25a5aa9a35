//! Liénard structure of the bore equation ρ″ = F(ρ) − G(ρ)ρ′.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::numerics::brent::{brent, BrentTol};
use crate::params::{equilibria, Equilibria, PhysParams};

/// Which side of the excluded band a (g, A) pair lies in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Region {
    /// Ebbing bores, ι = +1.
    C1,
    /// Surging bores, ι = −1.
    Cminus1,
    Excluded,
}

impl Region {
    pub fn iota(&self) -> Option<i8> {
        match self {
            Region::C1 => Some(1),
            Region::Cminus1 => Some(-1),
            Region::Excluded => None,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Region::C1 => "C1 (ebbing)",
            Region::Cminus1 => "Cminus1 (surging)",
            Region::Excluded => "Excluded",
        }
    }

    pub fn short(&self) -> &'static str {
        match self {
            Region::C1 => "C1",
            Region::Cminus1 => "Cminus1",
            Region::Excluded => "Excluded",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Classification {
    pub region: Region,
    /// C1 iff g is strictly below this value.
    pub g_c1: f64,
    /// Cminus1 iff g is strictly above this value.
    pub g_cm1: f64,
}

/// V(x)·(μA/a), which only depends on A.
fn reduced_potential(flux: f64, h_minus: f64, rho_minus: f64, x: f64) -> f64 {
    -((x - rho_minus) - (x.exp() - h_minus) + 0.25 * flux * ((-x).exp() - 1.0 / h_minus))
}

/// ρ⋆ > ρ₊ with V(ρ⋆) = 0.
pub fn find_rho_star(flux: f64) -> Result<f64> {
    let eq = equilibria(flux)?;
    let v = |x: f64| reduced_potential(flux, eq.h_minus, eq.rho_minus, x);
    let lo = eq.rho_plus;
    let mut span = 0.25;
    for _ in 0..64 {
        let hi = lo + span;
        if v(hi) > 0.0 {
            // V < 0 at ρ₊ so [ρ₊, hi] brackets the equipotential point
            return brent(v, lo, hi, BrentTol::default());
        }
        span *= 2.0;
    }
    Err(Error::internal(format!("rho_star bracket expansion failed for A = {flux}")))
}

pub fn classify(g: f64, flux: f64) -> Result<Classification> {
    if !(g >= 0.0) || !g.is_finite() {
        return Err(Error::domain(format!("g must be nonnegative, got {g}")));
    }
    let eq = equilibria(flux)?;
    let rho_star = find_rho_star(flux)?;
    Ok(classify_with(g, flux, &eq, rho_star))
}

fn classify_with(g: f64, flux: f64, eq: &Equilibria, rho_star: f64) -> Classification {
    let g_c1 = flux * flux * (-3.0 * rho_star).exp();
    let g_cm1 = flux * flux / (eq.h_minus * eq.h_minus * eq.h_minus);
    let region = if g < g_c1 {
        Region::C1
    } else if g > g_cm1 {
        Region::Cminus1
    } else {
        Region::Excluded
    };
    Classification { region, g_c1, g_cm1 }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundaryRow {
    #[serde(rename = "A")]
    pub flux: f64,
    pub g_lower: f64,
    pub g_upper: f64,
}

pub fn region_boundary_curve(samples: &[f64]) -> Result<Vec<BoundaryRow>> {
    samples
        .iter()
        .map(|&flux| {
            let c = classify(0.0, flux)?;
            Ok(BoundaryRow { flux, g_lower: c.g_c1, g_upper: c.g_cm1 })
        })
        .collect()
}

/// F, G, V and the distinguished points for one parameter bundle.
#[derive(Debug, Clone, Serialize)]
pub struct Landscape {
    pub params: PhysParams,
    pub eq: Equilibria,
    pub rho_star: f64,
    pub rho_zero: Option<f64>,
    pub classification: Classification,
    // a/(μA), 1/(4μ)
    #[serde(skip)]
    cf: f64,
    #[serde(skip)]
    cg: f64,
}

impl Landscape {
    pub fn new(params: &PhysParams) -> Result<Self> {
        let flux = params.flux();
        let eq = params.equilibria();
        let rho_star = find_rho_star(flux)?;
        let classification = classify_with(params.g(), flux, &eq, rho_star);
        let rho_zero = (params.g() > 0.0).then(|| (flux * flux / params.g()).ln() / 3.0);
        Ok(Landscape {
            params: *params,
            eq,
            rho_star,
            rho_zero,
            classification,
            cf: params.a() / (params.mu() * flux),
            cg: 0.25 / params.mu(),
        })
    }

    pub fn region(&self) -> Region {
        self.classification.region
    }

    pub fn f(&self, x: f64) -> f64 {
        let a = self.params.flux();
        self.cf * (1.0 - x.exp() - 0.25 * a * (-x).exp())
    }

    pub fn df(&self, x: f64) -> f64 {
        let a = self.params.flux();
        self.cf * (-x.exp() + 0.25 * a * (-x).exp())
    }

    pub fn g(&self, x: f64) -> f64 {
        let (a, g) = (self.params.flux(), self.params.g());
        self.cg * (a * (-x).exp() - (g / a) * (2.0 * x).exp())
    }

    pub fn dg(&self, x: f64) -> f64 {
        let (a, g) = (self.params.flux(), self.params.g());
        -self.cg * (a * (-x).exp() + 2.0 * (g / a) * (2.0 * x).exp())
    }

    pub fn v(&self, x: f64) -> f64 {
        self.cf * reduced_potential(self.params.flux(), self.eq.h_minus, self.eq.rho_minus, x)
    }

    /// √(−2V) on [ρ₋, ρ⋆]; zero where V ≥ 0.
    pub fn v_cap(&self, x: f64) -> f64 {
        (-2.0 * self.v(x)).max(0.0).sqrt()
    }

    /// Signed distance outside the trapping region (≤ 0 inside).
    pub fn trap_excess(&self, rho: f64, rho_prime: f64) -> f64 {
        let clamped = rho.clamp(self.eq.rho_minus, self.rho_star);
        (self.eq.rho_minus - rho)
            .max(rho - self.rho_star)
            .max(rho_prime.abs() - self.v_cap(clamped))
    }

    /// Liénard field (x₂, F(x₁) − x₂G(x₁)).
    pub fn field(&self, x1: f64, x2: f64) -> (f64, f64) {
        (x2, self.f(x1) - x2 * self.g(x1))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn example() -> Landscape {
        Landscape::new(&PhysParams::new(2.0, 1.0, 0.125, 0.75, 0.0, 0.1).unwrap()).unwrap()
    }

    // independent bisection on the same closed form
    fn bisect_rho_star(flux: f64) -> f64 {
        let hp = 0.5 * (1.0 + (1.0 - flux).sqrt());
        let hm = 1.0 - hp;
        let w = |x: f64| (x - hm.ln()) - (x.exp() - hm) + flux / 4.0 * ((-x).exp() - 1.0 / hm);
        let (mut lo, mut hi) = (hp.ln(), 5.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if w(mid) > 0.0 { lo = mid } else { hi = mid }
        }
        0.5 * (lo + hi)
    }

    // adaptive Simpson quadrature of −F from ρ₋
    fn quad_v(l: &Landscape, x: f64) -> f64 {
        fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> f64 {
            (b - a) / 6.0 * (f(a) + 4.0 * f(0.5 * (a + b)) + f(b))
        }
        fn rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, whole: f64, tol: f64, depth: u32) -> f64 {
            let m = 0.5 * (a + b);
            let (l, r) = (simpson(f, a, m), simpson(f, m, b));
            if depth == 0 || (l + r - whole).abs() <= 15.0 * tol {
                return l + r + (l + r - whole) / 15.0;
            }
            rec(f, a, m, l, tol / 2.0, depth - 1) + rec(f, m, b, r, tol / 2.0, depth - 1)
        }
        let f = |s: f64| -l.f(s);
        let a = l.eq.rho_minus;
        rec(&f, a, x, simpson(&f, a, x), 1e-13, 40)
    }

    #[test]
    fn example_values() {
        let l = example();
        assert!((l.g(l.eq.rho_minus) - 0.373698).abs() < 1e-6);
        assert!((l.v(l.eq.rho_plus) + 0.065741).abs() < 1e-6);
        assert!((l.v_cap(l.eq.rho_plus) - 0.362606).abs() < 1e-5);
        assert!((l.v(l.eq.rho_plus) - quad_v(&l, l.eq.rho_plus)).abs() < 1e-10);
        assert!(l.f(l.eq.rho_minus).abs() < 1e-12 && l.f(l.eq.rho_plus).abs() < 1e-12);
    }

    #[test]
    fn rho_star_three_quarters() {
        let r = find_rho_star(0.75).unwrap();
        assert!((r - 0.24601).abs() < 1e-4);
        assert!((r - bisect_rho_star(0.75)).abs() < 1e-12);
        let l = example();
        assert!(l.v(r).abs() <= 1e-12);
        assert!(-l.f(r) > 0.0);
    }

    #[test]
    fn rho_star_collapses_near_one() {
        let flux = 1.0 - 1e-6;
        let e = equilibria(flux).unwrap();
        assert!(find_rho_star(flux).unwrap() - e.rho_plus < 1e-2);
    }

    #[test]
    fn reference_regions() {
        assert_eq!(classify(0.125, 0.770).unwrap().region, Region::C1);
        assert_eq!(classify(25.0, 0.855).unwrap().region, Region::Cminus1);
        for a in [0.1, 0.3, 0.5, 0.7, 0.9] {
            assert_eq!(classify(8.0, a).unwrap().region, Region::Excluded);
        }
    }

    #[test]
    fn boundaries_three_quarters() {
        let c = classify(1.0, 0.75).unwrap();
        assert!((c.g_c1 - 0.26891).abs() < 1e-4);
        let oracle = 0.5625 * (-3.0 * bisect_rho_star(0.75)).exp();
        assert!((c.g_c1 - oracle).abs() < 1e-11);
        assert!((c.g_cm1 - 36.0).abs() < 1e-12);
        // equality counts as excluded
        assert_eq!(classify(c.g_cm1, 0.75).unwrap().region, Region::Excluded);
        assert_eq!(classify(c.g_c1, 0.75).unwrap().region, Region::Excluded);
    }

    #[test]
    fn boundary_curve_limits() {
        let rows = region_boundary_curve(&[0.75, 1.0 - 1e-9]).unwrap();
        assert!((rows[0].g_upper - 36.0).abs() < 1e-12);
        assert!((rows[1].g_lower - 8.0).abs() < 1e-2 && (rows[1].g_upper - 8.0).abs() < 1e-2);
    }

    #[test]
    fn zero_gravity_has_no_dissipation_root() {
        let l = Landscape::new(&PhysParams::new(1.0, 1.0, 0.0, 0.5, 0.0, 0.1).unwrap()).unwrap();
        assert!(l.rho_zero.is_none());
        assert_eq!(l.region(), Region::C1);
        assert!(l.g(3.0) > 0.0);
    }

    fn params_strategy() -> impl Strategy<Value = PhysParams> {
        (0.1f64..5.0, 0.1f64..5.0, 0.0f64..50.0, 0.05f64..0.95)
            .prop_map(|(mu, a, g, flux)| PhysParams::new(mu, a, g, flux, 0.0, 0.1).unwrap())
    }

    proptest! {
        #[test]
        fn potential_derivative_is_minus_f(p in params_strategy(), s in 0.0f64..1.0) {
            let l = Landscape::new(&p).unwrap();
            let x = l.eq.rho_minus - 1.0 + s * (l.rho_star - l.eq.rho_minus + 2.0);
            let h = 1e-5;
            let dv = (l.v(x + h) - l.v(x - h)) / (2.0 * h);
            prop_assert!((dv + l.f(x)).abs() <= 1e-8 * (1.0 + l.f(x).abs()));
        }

        #[test]
        fn dissipation_decreasing(p in params_strategy(), s in 0.0f64..1.0, t in 0.0f64..1.0) {
            let l = Landscape::new(&p).unwrap();
            let lo = l.eq.rho_minus - 2.0;
            let w = l.rho_star + 2.0 - lo;
            let (x1, x2) = (lo + s.min(t) * w, lo + s.max(t) * w);
            prop_assume!(x2 - x1 > 1e-9);
            prop_assert!(l.g(x1) > l.g(x2));
            prop_assert!(l.dg(x1) < 0.0);
        }

        #[test]
        fn dissipation_sign_root(p in params_strategy(), s in -3.0f64..3.0) {
            let l = Landscape::new(&p).unwrap();
            if let Some(r0) = l.rho_zero {
                prop_assert!(l.g(r0).abs() <= 1e-12 * (p.flux() / p.mu()));
                let x = r0 + s;
                prop_assume!(s.abs() > 1e-6);
                prop_assert_eq!(l.g(x) > 0.0, x < r0);
            }
        }

        #[test]
        fn classification_matches_direct_signs(p in params_strategy()) {
            let l = Landscape::new(&p).unwrap();
            match l.region() {
                Region::C1 => prop_assert!(l.g(l.rho_star) > 0.0),
                Region::Cminus1 => prop_assert!(l.g(l.eq.rho_minus) < 0.0),
                Region::Excluded => {
                    prop_assert!(l.g(l.rho_star) <= 1e-12 && l.g(l.eq.rho_minus) >= -1e-12)
                }
            }
            prop_assert!(l.classification.g_cm1 > l.classification.g_c1);
        }

        #[test]
        fn cap_identity(p in params_strategy(), s in 0.0f64..1.0) {
            let l = Landscape::new(&p).unwrap();
            let x = l.eq.rho_minus + s * (l.rho_star - l.eq.rho_minus);
            let c = l.v_cap(x);
            let v = l.v(x);
            if v <= 0.0 {
                prop_assert!((c * c + 2.0 * v).abs() <= 1e-12);
            } else {
                // only reachable within root-finder tolerance of ρ⋆
                prop_assert!(v <= 1e-9 && c == 0.0);
            }
            prop_assert!(l.v_cap(l.eq.rho_minus) < 1e-5 && l.v_cap(l.rho_star) < 1e-5);
        }
    }
}
