//! Heteroclinic orbits of the Liénard system by manifold shooting.

use nalgebra::{Matrix2, Vector2};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::landscape::{Landscape, Region};
use crate::numerics::brent::{brent, BrentTol};
use crate::numerics::dopri::{flow_to, integrate, Flow, StepControl};
use crate::numerics::linear_fit;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum EquilibriumAt {
    RhoMinus,
    RhoPlus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Character {
    Hyperbolic,
    Sink,
    Source,
    /// G = 0 at ρ₊: a linear center, never produced by an admissible region.
    Center,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Eigenvalue {
    pub re: f64,
    pub im: f64,
}

impl Eigenvalue {
    pub fn is_real(&self) -> bool {
        self.im == 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EquilibriumSpectrum {
    pub at: EquilibriumAt,
    pub rho: f64,
    pub lambda_minus: Eigenvalue,
    pub lambda_plus: Eigenvalue,
    /// (1, λ₊) when the eigenvalues are real.
    pub tangent_unstable: Option<[f64; 2]>,
    /// (1, λ₋) when the eigenvalues are real.
    pub tangent_stable: Option<[f64; 2]>,
    pub character: Character,
    pub f_prime: f64,
    pub damping: f64,
}

/// Jacobian of the Liénard field at (x₁, x₂).
pub fn jacobian(l: &Landscape, x1: f64, x2: f64) -> Matrix2<f64> {
    Matrix2::new(0.0, 1.0, l.df(x1) - x2 * l.dg(x1), -l.g(x1))
}

pub fn linearize(at: EquilibriumAt, l: &Landscape) -> Result<EquilibriumSpectrum> {
    let rho = match at {
        EquilibriumAt::RhoMinus => l.eq.rho_minus,
        EquilibriumAt::RhoPlus => l.eq.rho_plus,
    };
    let fp = l.df(rho);
    let gg = l.g(rho);
    let disc = gg * gg + 4.0 * fp;
    let (lm, lp) = if disc >= 0.0 {
        let s = disc.sqrt();
        // stable product form for the smaller-magnitude root
        let big = if gg > 0.0 { (-gg - s) / 2.0 } else { (-gg + s) / 2.0 };
        let small = if big != 0.0 { -fp / big } else { 0.0 };
        let (lo, hi) = if big < small { (big, small) } else { (small, big) };
        (Eigenvalue { re: lo, im: 0.0 }, Eigenvalue { re: hi, im: 0.0 })
    } else {
        let s = (-disc).sqrt() / 2.0;
        (Eigenvalue { re: -gg / 2.0, im: -s }, Eigenvalue { re: -gg / 2.0, im: s })
    };
    let real = disc >= 0.0;
    let character = match at {
        EquilibriumAt::RhoMinus => {
            if !real {
                return Err(Error::internal("complex eigenvalues at rho_minus"));
            }
            let bound = fp.sqrt();
            let ok = if gg > 0.0 {
                lm.re < -bound && lp.re < bound
            } else if gg < 0.0 {
                lm.re > -bound && lp.re > bound
            } else {
                true
            };
            if !ok || !(lm.re < 0.0 && lp.re > 0.0) {
                return Err(Error::internal("eigenvalue bounds at rho_minus violated"));
            }
            Character::Hyperbolic
        }
        EquilibriumAt::RhoPlus => {
            if gg > 0.0 {
                Character::Sink
            } else if gg < 0.0 {
                Character::Source
            } else {
                Character::Center
            }
        }
    };
    Ok(EquilibriumSpectrum {
        at,
        rho,
        lambda_minus: lm,
        lambda_plus: lp,
        tangent_unstable: real.then_some([1.0, lp.re]),
        tangent_stable: real.then_some([1.0, lm.re]),
        character,
        f_prime: fp,
        damping: gg,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ShootOpts {
    pub seed_offset: f64,
    pub terminal_tol: f64,
    pub max_time: f64,
    pub rtol: f64,
    pub atol: f64,
}

impl Default for ShootOpts {
    fn default() -> Self {
        ShootOpts { seed_offset: 1e-8, terminal_tol: 1e-9, max_time: 1e4, rtol: 1e-10, atol: 1e-12 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OrbitSample {
    pub t: f64,
    pub rho: f64,
    pub rho_prime: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TailFit {
    pub rate: f64,
    pub r2: f64,
    pub points: usize,
}

/// One end of an orbit: the limiting equilibrium and its linearization.
#[derive(Debug, Clone, Copy, PartialEq)]
struct End {
    point: Vector2<f64>,
    jac: Matrix2<f64>,
}

#[derive(Debug, Clone)]
pub struct OrbitSolution {
    pub landscape: Landscape,
    /// +1 ebbing, −1 surging, 0 for a stationary orbit.
    pub chirality: i8,
    pub samples: Vec<OrbitSample>,
    /// ρ at −∞ and at +∞.
    pub rho_limits: (f64, f64),
    /// Original time of the mid-height crossing, now shifted to t = 0.
    pub anchor: f64,
    pub decay_rate: f64,
    pub tail_fits: (TailFit, TailFit),
    pub trap_violation: f64,
    /// |ρ − limit| at the first and last sample.
    pub endpoint_error: (f64, f64),
    pub seed_offset: f64,
    left: End,
    right: End,
}

impl OrbitSolution {
    /// The constant solution sitting at `rho` (which must be an equilibrium).
    pub fn stationary(l: &Landscape, rho: f64, t_range: (f64, f64)) -> Self {
        let end = End { point: Vector2::new(rho, 0.0), jac: jacobian(l, rho, 0.0) };
        let n = 65;
        let samples = (0..n)
            .map(|i| OrbitSample {
                t: t_range.0 + (t_range.1 - t_range.0) * i as f64 / (n - 1) as f64,
                rho,
                rho_prime: 0.0,
            })
            .collect();
        OrbitSolution {
            landscape: l.clone(),
            chirality: 0,
            samples,
            rho_limits: (rho, rho),
            anchor: 0.0,
            decay_rate: 0.0,
            tail_fits: (TailFit { rate: 0.0, r2: 1.0, points: 0 }, TailFit { rate: 0.0, r2: 1.0, points: 0 }),
            trap_violation: 0.0,
            endpoint_error: (0.0, 0.0),
            seed_offset: 0.0,
            left: end,
            right: end,
        }
    }

    pub fn t_range(&self) -> (f64, f64) {
        (self.samples[0].t, self.samples[self.samples.len() - 1].t)
    }

    pub fn region(&self) -> Region {
        self.landscape.region()
    }

    /// Phase-space state (ρ, ρ′) at an arbitrary time.
    ///
    /// Inside the sampled range the flow is re-integrated from the nearest
    /// sample; outside it the linearization at the limiting equilibrium is used.
    pub fn state_at(&self, t: f64) -> Vector2<f64> {
        let (t0, t1) = self.t_range();
        if t <= t0 {
            return extrapolate(&self.left, self.sample_vec(0), t - t0);
        }
        if t >= t1 {
            return extrapolate(&self.right, self.sample_vec(self.samples.len() - 1), t - t1);
        }
        let k = self.samples.partition_point(|s| s.t <= t);
        let i = if t - self.samples[k - 1].t <= self.samples[k].t - t { k - 1 } else { k };
        if self.samples[i].t == t {
            return self.sample_vec(i);
        }
        local_flow(&self.landscape, self.sample_vec(i), self.samples[i].t, t)
    }

    pub fn states_at(&self, ts: &[f64]) -> Vec<Vector2<f64>> {
        ts.iter().map(|&t| self.state_at(t)).collect()
    }

    fn sample_vec(&self, i: usize) -> Vector2<f64> {
        Vector2::new(self.samples[i].rho, self.samples[i].rho_prime)
    }

    pub fn left_equilibrium(&self) -> Vector2<f64> {
        self.left.point
    }

    pub fn right_equilibrium(&self) -> Vector2<f64> {
        self.right.point
    }

    /// Earliest and latest times at which ρ is farther than `tol` from its limits.
    pub fn active_window(&self, tol: f64) -> (f64, f64) {
        let (l, r) = self.rho_limits;
        let first = self.samples.iter().position(|s| (s.rho - l).abs() > tol).unwrap_or(0);
        let last = self.samples.iter().rposition(|s| (s.rho - r).abs() > tol).unwrap_or(self.samples.len() - 1);
        let lo = self.samples[first.saturating_sub(1)].t;
        let hi = self.samples[(last + 1).min(self.samples.len() - 1)].t;
        (lo, hi)
    }
}

fn liénard(l: &Landscape, x: &Vector2<f64>) -> Vector2<f64> {
    let (a, b) = l.field(x[0], x[1]);
    Vector2::new(a, b)
}

fn local_flow(l: &Landscape, x0: Vector2<f64>, t0: f64, t: f64) -> Vector2<f64> {
    flow_to(|_, x| liénard(l, x), t0, x0, t, &StepControl::tight())
        .expect("short re-integration between accepted samples")
}

fn extrapolate(end: &End, x: Vector2<f64>, dt: f64) -> Vector2<f64> {
    let j = &end.jac;
    let det = j.determinant();
    if det < 0.0 {
        // saddle: keep only the mode that decays towards the end state
        let tr = j.trace();
        let s = (tr * tr / 4.0 - det).sqrt();
        let (ls, lu) = (tr / 2.0 - s, tr / 2.0 + s);
        let lam = if dt < 0.0 { lu } else { ls };
        let other = if dt < 0.0 { ls } else { lu };
        let proj = (j - Matrix2::identity() * other) / (lam - other);
        return end.point + proj * (x - end.point) * (lam * dt).exp();
    }
    end.point + (j * dt).exp() * (x - end.point)
}

/// Transform to coordinates in which the linear flow at `jac` is a pure
/// scaling (real case) or rotation-scaling (complex case).
pub(crate) fn canonical(jac: &Matrix2<f64>) -> Matrix2<f64> {
    let tr = jac.trace();
    let det = jac.determinant();
    let disc = tr * tr / 4.0 - det;
    let scale = tr.abs().max(det.abs().sqrt()).max(1e-300);
    let p = if disc > 1e-10 * scale * scale {
        let s = disc.sqrt();
        let (l1, l2) = (tr / 2.0 - s, tr / 2.0 + s);
        Matrix2::new(1.0, 1.0, l1, l2)
    } else if disc < -1e-10 * scale * scale {
        let beta = (-disc).sqrt();
        Matrix2::new(1.0, 0.0, tr / 2.0, beta)
    } else {
        Matrix2::identity()
    };
    p.try_inverse().unwrap_or_else(Matrix2::identity)
}

fn fit_tail<'a>(
    samples: impl Iterator<Item = &'a OrbitSample>,
    end: &End,
    limit: f64,
) -> TailFit {
    let tf = canonical(&end.jac);
    let mut ts = Vec::new();
    let mut ls = Vec::new();
    for s in samples {
        let d = (tf * (Vector2::new(s.rho, s.rho_prime) - end.point)).norm();
        if d > limit && ts.len() >= 5 {
            break;
        }
        if d > 0.0 {
            ts.push(s.t);
            ls.push(d.ln());
        }
    }
    if ts.len() < 3 {
        return TailFit { rate: 0.0, r2: 0.0, points: ts.len() };
    }
    let (slope, _, r2) = linear_fit(&ts, &ls);
    TailFit { rate: slope.abs(), r2, points: ts.len() }
}

/// Shoot the distinguished heteroclinic orbit for a C1 or Cminus1 landscape.
pub fn shoot_heteroclinic(l: &Landscape, opts: &ShootOpts) -> Result<OrbitSolution> {
    let c = l.classification;
    let sign = match c.region {
        Region::C1 => 1.0,
        Region::Cminus1 => -1.0,
        Region::Excluded => {
            return Err(Error::domain(format!(
                "(g, A) = ({}, {}) is in the excluded region: C1 needs g < {}, Cminus1 needs g > {}",
                l.params.g(),
                l.params.flux(),
                c.g_c1,
                c.g_cm1
            )))
        }
    };
    let spec = linearize(EquilibriumAt::RhoMinus, l)?;
    let tangent = if sign > 0.0 { spec.tangent_unstable } else { spec.tangent_stable }
        .ok_or_else(|| Error::internal("missing real tangent at rho_minus"))?;
    let dir = Vector2::new(tangent[0], tangent[1]).normalize();
    let x_minus = Vector2::new(l.eq.rho_minus, 0.0);
    let x_plus = Vector2::new(l.eq.rho_plus, 0.0);
    let seed = x_minus + dir * opts.seed_offset;

    let ctl = StepControl { rtol: opts.rtol, atol: opts.atol, ..Default::default() };
    let mut raw = vec![(0.0, seed)];
    let mut breach = 0.0f64;
    let out = integrate(
        |_, x| liénard(l, x) * sign,
        0.0,
        seed,
        opts.max_time,
        &ctl,
        |tau, x| {
            raw.push((tau, *x));
            breach = breach.max(l.trap_excess(x[0], x[1]));
            if breach > 1e-4 || (x - x_plus).norm() < opts.terminal_tol {
                Flow::Stop
            } else {
                Flow::Continue
            }
        },
    )?;
    if breach > 1e-4 {
        return Err(Error::TrappingBreach { violation: breach });
    }
    if !out.stopped {
        return Err(Error::SlowConvergence {
            t: out.t,
            distance: (out.y - x_plus).norm(),
            rho: out.y[0],
            rho_prime: out.y[1],
        });
    }

    let mut samples: Vec<OrbitSample> =
        raw.iter().map(|(tau, x)| OrbitSample { t: sign * tau, rho: x[0], rho_prime: x[1] }).collect();
    let end_minus = End { point: x_minus, jac: jacobian(l, l.eq.rho_minus, 0.0) };
    let end_plus = End { point: x_plus, jac: jacobian(l, l.eq.rho_plus, 0.0) };
    let (left, right) = if sign > 0.0 { (end_minus, end_plus) } else { (end_plus, end_minus) };
    if sign < 0.0 {
        samples.reverse();
    }

    // anchor: the mid-height crossing adjacent to the hyperbolic end
    let mid = 0.5 * (l.eq.rho_minus + l.eq.rho_plus);
    let crosses = |i: usize| (samples[i].rho - mid) * (samples[i + 1].rho - mid) <= 0.0;
    let idx = if sign > 0.0 {
        (0..samples.len() - 1).find(|&i| crosses(i))
    } else {
        (0..samples.len() - 1).rev().find(|&i| crosses(i))
    }
    .ok_or_else(|| Error::internal("orbit never crosses mid height"))?;
    let s0 = samples[idx];
    let x0 = Vector2::new(s0.rho, s0.rho_prime);
    let anchor = if samples[idx + 1].rho == mid {
        samples[idx + 1].t
    } else if s0.rho == mid {
        s0.t
    } else {
        brent(
            |t| local_flow(l, x0, s0.t, t)[0] - mid,
            s0.t,
            samples[idx + 1].t,
            BrentTol { xtol: 1e-14, ftol: 1e-13, max_iter: 200 },
        )?
    };
    for s in samples.iter_mut() {
        s.t -= anchor;
    }

    let trap_violation = samples.iter().map(|s| l.trap_excess(s.rho, s.rho_prime)).fold(0.0, f64::max);
    let left_fit = fit_tail(samples.iter(), &left, 1e-4);
    let right_fit = fit_tail(samples.iter().rev(), &right, 1e-4);
    let first = samples[0];
    let last = samples[samples.len() - 1];
    Ok(OrbitSolution {
        landscape: l.clone(),
        chirality: sign as i8,
        rho_limits: (left.point[0], right.point[0]),
        endpoint_error: ((first.rho - left.point[0]).abs(), (last.rho - right.point[0]).abs()),
        samples,
        anchor,
        decay_rate: left_fit.rate.min(right_fit.rate),
        tail_fits: (left_fit, right_fit),
        trap_violation,
        seed_offset: opts.seed_offset,
        left,
        right,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnergyAudit {
    /// max over intervals of |ΔE + ∫Gρ′²| relative to ∫|G|ρ′² over the orbit.
    pub value: f64,
    pub e_start: f64,
    pub e_end: f64,
}

/// Check E′ = −G(ρ)ρ′² interval by interval.
///
/// The dissipation integral uses the trapezoid rule with its endpoint
/// derivative correction, which keeps the quadrature error below the
/// integrator tolerance on adaptive sample spacings.
pub fn energy_audit(orbit: &OrbitSolution) -> EnergyAudit {
    let l = &orbit.landscape;
    let energy = |s: &OrbitSample| 0.5 * s.rho_prime * s.rho_prime + l.v(s.rho);
    let diss = |s: &OrbitSample| {
        let (r, v) = (s.rho, s.rho_prime);
        let acc = l.f(r) - l.g(r) * v;
        (l.g(r) * v * v, l.dg(r) * v * v * v + 2.0 * l.g(r) * v * acc, l.g(r).abs() * v * v)
    };
    let mut worst = 0.0f64;
    let mut total = 0.0;
    for w in orbit.samples.windows(2) {
        let h = w[1].t - w[0].t;
        let (f0, d0, a0) = diss(&w[0]);
        let (f1, d1, a1) = diss(&w[1]);
        let integral = 0.5 * h * (f0 + f1) + h * h / 12.0 * (d0 - d1);
        total += 0.5 * h * (a0 + a1);
        worst = worst.max((energy(&w[1]) - energy(&w[0]) + integral).abs());
    }
    let n = orbit.samples.len();
    EnergyAudit {
        value: if total > 0.0 { worst / total } else { 0.0 },
        e_start: energy(&orbit.samples[0]),
        e_end: energy(&orbit.samples[n - 1]),
    }
}
