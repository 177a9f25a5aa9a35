//! Perturbed connecting orbits under small nonautonomous forcing.
//!
//! The correction `B(λ)` to a base orbit is computed on two overlapping pieces.
//! Up to the switch time `T` (the base orbit still hugs the saddle) a Duhamel
//! fixed point with split stable/unstable integrals gives the bounded branch.
//! From slightly before `T` onwards the linearization along the base orbit is
//! inverted by a marching Volterra quadrature and only the nonlinear remainder
//! is iterated. The two pieces are compared at `T` and glued there.
//!
//! Surging orbits run from the source to the saddle; they are handled in
//! reversed time so that the saddle always sits at the left end.

use nalgebra::{Matrix2, Matrix6, Vector2, Vector6};
use serde::{Deserialize, Serialize};
use std::ops::{Add, Mul};

use crate::error::{Error, Result};
use crate::landscape::Landscape;
use crate::numerics::brent::{brent, BrentTol};
use crate::numerics::{linear_fit, GL8};
use crate::orbit::{canonical, jacobian, OrbitSolution};

pub type V2 = Vector2<f64>;
pub type M2 = Matrix2<f64>;

/// Autonomous planar field Φ with its Jacobian.
pub trait VectorField: Sync {
    fn eval(&self, x: &V2) -> V2;
    fn jacobian(&self, x: &V2) -> M2;
}

impl VectorField for Landscape {
    fn eval(&self, x: &V2) -> V2 {
        let (a, b) = self.field(x[0], x[1]);
        V2::new(a, b)
    }

    fn jacobian(&self, x: &V2) -> M2 {
        jacobian(self, x[0], x[1])
    }
}

/// x ↦ Mx
#[derive(Debug, Clone, Copy)]
pub struct LinearField(pub M2);

impl VectorField for LinearField {
    fn eval(&self, x: &V2) -> V2 {
        self.0 * x
    }

    fn jacobian(&self, _: &V2) -> M2 {
        self.0
    }
}

struct Reversed<'a>(&'a dyn VectorField, f64);

impl VectorField for Reversed<'_> {
    fn eval(&self, x: &V2) -> V2 {
        self.0.eval(x) * self.1
    }

    fn jacobian(&self, x: &V2) -> M2 {
        self.0.jacobian(x) * self.1
    }
}

/// Nonautonomous perturbation ψ₁(λ, t, x) of the field.
///
/// Implementations must be pure: the lab may call them from several threads.
pub trait Perturbation: Sync {
    fn eval(&self, lambda: f64, t: f64, x: &V2) -> V2;
}

impl<F> Perturbation for F
where
    F: Fn(f64, f64, &V2) -> V2 + Sync,
{
    fn eval(&self, lambda: f64, t: f64, x: &V2) -> V2 {
        self(lambda, t, x)
    }
}

/// ψ₁ = λ·exp(−(t − t₀)²/w²)·(0, 1)
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianBump {
    pub t0: f64,
    pub width: f64,
}

impl Perturbation for GaussianBump {
    fn eval(&self, lambda: f64, t: f64, _: &V2) -> V2 {
        let s = (t - self.t0) / self.width;
        V2::new(0.0, lambda * (-s * s).exp())
    }
}

/// ψ₁ = λ·(0, c)
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstantForce {
    pub c: f64,
}

impl Perturbation for ConstantForce {
    fn eval(&self, lambda: f64, _: f64, _: &V2) -> V2 {
        V2::new(0.0, lambda * self.c)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabOpts {
    /// Smallest step, used next to the switch time.
    pub h_min: f64,
    pub h_max: f64,
    /// Ratio between consecutive steps in the graded part of the grid.
    pub growth: f64,
    /// Hyperbolic window is `window_factor / alpha`.
    pub window_factor: f64,
    /// Attractor window past the orbit is `tail_factor / |Re λ|` of the sink.
    pub tail_factor: f64,
    /// Length of the stretch on which both branches are computed.
    pub overlap: f64,
    /// The base orbit stays this close to the saddle up to the switch time.
    pub switch_distance: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for LabOpts {
    fn default() -> Self {
        LabOpts {
            h_min: 1e-3,
            h_max: 0.02,
            growth: 1.05,
            window_factor: 200.0,
            tail_factor: 40.0,
            overlap: 1.0,
            switch_distance: 1e-3,
            tol: 1e-10,
            max_iter: 60,
        }
    }
}

/// Linear data of the saddle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HyperbolicData {
    pub m: [[f64; 2]; 2],
    pub proj_s: [[f64; 2]; 2],
    pub proj_u: [[f64; 2]; 2],
    pub lambda_s: f64,
    pub lambda_u: f64,
    /// Sampled semigroup constants: ‖e^{tM}Π_s‖, ‖e^{−tM}Π_u‖ ≤ K e^{−αt} on [0, 20].
    pub k: f64,
    pub alpha: f64,
}

fn to_rows(m: &M2) -> [[f64; 2]; 2] {
    [[m[(0, 0)], m[(0, 1)]], [m[(1, 0)], m[(1, 1)]]]
}

fn from_rows(r: &[[f64; 2]; 2]) -> M2 {
    M2::new(r[0][0], r[0][1], r[1][0], r[1][1])
}

impl HyperbolicData {
    pub fn new(m: M2) -> Result<Self> {
        let tr = m.trace();
        let det = m.determinant();
        if !(det < 0.0) {
            return Err(Error::domain(format!("matrix is not a saddle (det = {det})")));
        }
        let s = (tr * tr / 4.0 - det).sqrt();
        let big = if tr >= 0.0 { tr / 2.0 + s } else { tr / 2.0 - s };
        let small = det / big;
        let (ls, lu) = if big < 0.0 { (big, small) } else { (small, big) };
        let id = M2::identity();
        let proj_u = (m - id * ls) / (lu - ls);
        let proj_s = (id * lu - m) / (lu - ls);
        let alpha = (-ls).min(lu);
        let mut k = 1.0f64;
        for i in 0..=400 {
            let t = 0.05 * i as f64;
            let gs = ((m * t).exp() * proj_s).norm();
            let gu = ((m * -t).exp() * proj_u).norm();
            k = k.max(gs.max(gu) * (alpha * t).exp());
        }
        Ok(HyperbolicData {
            m: to_rows(&m),
            proj_s: to_rows(&proj_s),
            proj_u: to_rows(&proj_u),
            lambda_s: ls,
            lambda_u: lu,
            k,
            alpha,
        })
    }

    pub fn matrix(&self) -> M2 {
        from_rows(&self.m)
    }

    pub fn stable_projection(&self) -> M2 {
        from_rows(&self.proj_s)
    }

    pub fn unstable_projection(&self) -> M2 {
        from_rows(&self.proj_u)
    }

    /// Unit vector spanning the unstable eigenspace, with nonnegative first entry.
    pub fn unstable_direction(&self) -> V2 {
        let p = self.unstable_projection();
        let c0 = p.column(0).into_owned();
        let c1 = p.column(1).into_owned();
        let v = if c0.norm() >= c1.norm() { c0 } else { c1 };
        let v = v / v.norm();
        if v[0] < 0.0 {
            -v
        } else {
            v
        }
    }
}

/// A trajectory piece on a time grid.
#[derive(Debug, Clone)]
pub struct Branch {
    pub t: Vec<f64>,
    pub y: Vec<V2>,
    pub iterations: usize,
    pub contraction_ratio: f64,
}

/// Ascending grid ending at `t_end`, graded from `h_min` near `t_end` to
/// `h_max`, covering at least `window`.
pub fn backward_grid(t_end: f64, window: f64, opts: &LabOpts) -> Vec<f64> {
    let mut t = vec![t_end];
    let mut h = opts.h_min;
    let mut cur = t_end;
    while t_end - cur < window || t.len() < 4 {
        cur -= h;
        t.push(cur);
        h = (h * opts.growth).min(opts.h_max);
    }
    t.reverse();
    t
}

/// ∫_a^b k(τ) ℓ_j(τ) dτ for the Lagrange basis ℓ_j on four nodes.
fn product_weights<K>(nodes: &[f64], a: f64, b: f64, kern: impl Fn(f64) -> K, zero: K) -> [K; 4]
where
    K: Copy + Add<Output = K> + Mul<f64, Output = K>,
{
    let mut w = [zero; 4];
    let (mid, half) = ((a + b) / 2.0, (b - a) / 2.0);
    for &(x, gw) in GL8.iter() {
        let tau = mid + half * x;
        let kv = kern(tau);
        for j in 0..4 {
            let mut l = 1.0;
            for m in 0..4 {
                if m != j {
                    l *= (tau - nodes[m]) / (nodes[j] - nodes[m]);
                }
            }
            w[j] = w[j] + kv * (l * gw * half);
        }
    }
    w
}

/// Contraction bookkeeping for a fixed-point iteration.
struct Monitor {
    last: Option<f64>,
    ratio: f64,
}

impl Monitor {
    fn new() -> Self {
        Monitor { last: None, ratio: 0.0 }
    }

    /// Record the sup distance between successive iterates.
    fn push(&mut self, d: f64, tol: f64) -> Result<()> {
        if !d.is_finite() {
            return Err(Error::Contraction { ratio: f64::INFINITY });
        }
        if let Some(prev) = self.last {
            // below this the ratio only measures roundoff
            if prev > 10.0 * tol && d > 1e-3 * tol {
                self.ratio = self.ratio.max(d / prev);
            }
        }
        self.last = Some(d);
        if self.ratio >= 0.9 {
            return Err(Error::Contraction { ratio: self.ratio });
        }
        Ok(())
    }
}

fn sup_diff(a: &[V2], b: &[V2]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).amax()).fold(0.0, f64::max)
}

/// Bounded solution of Y′ = M Y + Ψ(j, Y) on the grid `t` (ending at T) with
/// unstable component `x_u` at T. `psi` is indexed by grid node.
fn hyperbolic_on_grid(
    data: &HyperbolicData,
    t: &[f64],
    psi: &dyn Fn(usize, &V2) -> V2,
    x_u: V2,
    opts: &LabOpts,
) -> Result<Branch> {
    let n = t.len();
    let (ls, lu) = (data.lambda_s, data.lambda_u);
    let (ps, pu) = (data.stable_projection(), data.unstable_projection());
    let x_u = pu * x_u;
    let t_end = t[n - 1];
    let mut start = Vec::with_capacity(n - 1);
    let mut ws = Vec::with_capacity(n - 1);
    let mut wu = Vec::with_capacity(n - 1);
    for i in 0..n - 1 {
        let s = i.saturating_sub(1).min(n - 4);
        let nodes = &t[s..s + 4];
        let (a, b) = (t[i], t[i + 1]);
        start.push(s);
        ws.push(product_weights(nodes, a, b, |tau| (ls * (b - tau)).exp(), 0.0));
        wu.push(product_weights(nodes, a, b, |tau| (lu * (a - tau)).exp(), 0.0));
    }
    let mut y: Vec<V2> = t.iter().map(|&ti| x_u * (lu * (ti - t_end)).exp()).collect();
    let mut mon = Monitor::new();
    let mut fs = vec![V2::zeros(); n];
    let mut fu = vec![V2::zeros(); n];
    for it in 1..=opts.max_iter {
        for j in 0..n {
            let f = psi(j, &y[j]);
            fs[j] = ps * f;
            fu[j] = pu * f;
        }
        let mut next = vec![V2::zeros(); n];
        // tail closure: forcing frozen before the window
        let mut a = fs[0] / -ls;
        next[0] = a;
        for i in 0..n - 1 {
            let h = t[i + 1] - t[i];
            let s = start[i];
            a = a * (ls * h).exp() + (0..4).map(|k| fs[s + k] * ws[i][k]).sum::<V2>();
            next[i + 1] = a;
        }
        let mut b = x_u;
        next[n - 1] += b;
        for i in (0..n - 1).rev() {
            let h = t[i + 1] - t[i];
            let s = start[i];
            b = b * (-lu * h).exp() - (0..4).map(|k| fu[s + k] * wu[i][k]).sum::<V2>();
            next[i] += b;
        }
        let d = sup_diff(&next, &y);
        y = next;
        mon.push(d, opts.tol)?;
        if d < opts.tol {
            return Ok(Branch { t: t.to_vec(), y, iterations: it, contraction_ratio: mon.ratio });
        }
    }
    Err(Error::Contraction { ratio: mon.ratio.max(0.9) })
}

/// Bounded solution on (−∞, T] of Y′ = M_h Y + Ψ(t, Y) with Π_u Y(T) = Π_u x_u.
///
/// `psi` carries everything beyond the linear part: the nonlinear remainder of
/// the field and the perturbation, in coordinates centred at the saddle.
pub fn hyperbolic_fixed_point(
    data: &HyperbolicData,
    psi: &(dyn Fn(f64, &V2) -> V2 + Sync),
    t_switch: f64,
    x_u: V2,
    opts: &LabOpts,
) -> Result<Branch> {
    if x_u.norm() > 1e-3 {
        return Err(Error::domain(format!("|x_u| = {:e} exceeds 1e-3", x_u.norm())));
    }
    let t = backward_grid(t_switch, opts.window_factor / data.alpha, opts);
    hyperbolic_on_grid(data, &t, &|j, y| psi(t[j], y), x_u, opts)
}

/// Linearized flow along a base trajectory, split as M_a + K(t).
pub struct AttractorProblem<'a> {
    pub field: &'a dyn VectorField,
    /// Base trajectory X̄(t).
    pub base: &'a (dyn Fn(f64) -> V2 + Sync),
    /// Jacobian at the attracting equilibrium.
    pub m_a: M2,
    /// Forcing ψ(t, X) evaluated on the full state.
    pub forcing: &'a (dyn Fn(f64, &V2) -> V2 + Sync),
}

struct AttractorGrid {
    t: Vec<f64>,
    x: Vec<V2>,
    phi: Vec<V2>,
    k: Vec<M2>,
}

impl AttractorGrid {
    fn new(prob: &AttractorProblem, t: Vec<f64>) -> Self {
        let x: Vec<V2> = t.iter().map(|&s| (prob.base)(s)).collect();
        let phi = x.iter().map(|v| prob.field.eval(v)).collect();
        let k = x.iter().map(|v| prob.field.jacobian(v) - prob.m_a).collect();
        AttractorGrid { t, x, phi, k }
    }
}

/// Solve Z = e^{(t−t₀)M}z₀ + ∫ e^{(t−τ)M}(K Z + r) on a uniform grid.
fn volterra_march(m: &M2, grid: &AttractorGrid, z0: V2, r: &[V2]) -> Vec<V2> {
    let t = &grid.t;
    let n = t.len();
    let h = t[1] - t[0];
    let kern = |end: f64| move |tau: f64| (m * (end - tau)).exp();
    let id = M2::identity();
    let mut z = vec![V2::zeros(); n];
    z[0] = z0;
    let g0 = grid.k[0] * z0 + r[0];

    // first three steps together, cubic through nodes 0..3
    let nodes = [0.0, h, 2.0 * h, 3.0 * h];
    let mut big = Matrix6::<f64>::identity();
    let mut rhs = Vector6::<f64>::zeros();
    for mi in 1..=3 {
        let end = mi as f64 * h;
        let mut v = [M2::zeros(); 4];
        for piece in 0..mi {
            let w = product_weights(&nodes, piece as f64 * h, (piece + 1) as f64 * h, kern(end), M2::zeros());
            for j in 0..4 {
                v[j] += w[j];
            }
        }
        let mut b = (m * end).exp() * z0 + v[0] * g0;
        for j in 1..4 {
            b += v[j] * r[j];
            let blk = v[j] * grid.k[j];
            let mut view = big.fixed_view_mut::<2, 2>(2 * (mi - 1), 2 * (j - 1));
            view -= blk;
        }
        rhs.fixed_rows_mut::<2>(2 * (mi - 1)).copy_from(&b);
    }
    let sol = big.lu().solve(&rhs).expect("start-up block is a small perturbation of the identity");
    for j in 1..4 {
        z[j] = sol.fixed_rows::<2>(2 * (j - 1)).into_owned();
    }

    let e = (m * h).exp();
    let w = product_weights(&[-2.0 * h, -h, 0.0, h], 0.0, h, kern(h), M2::zeros());
    let mut g: Vec<V2> = (0..4).map(|j| grid.k[j] * z[j] + r[j]).collect();
    g.resize(n, V2::zeros());
    for i in 3..n - 1 {
        let a = id - w[3] * grid.k[i + 1];
        let b = e * z[i] + w[0] * g[i - 2] + w[1] * g[i - 1] + w[2] * g[i] + w[3] * r[i + 1];
        z[i + 1] = a.lu().solve(&b).expect("implicit step matrix near identity");
        g[i + 1] = grid.k[i + 1] * z[i + 1] + r[i + 1];
    }
    z
}

fn attractor_on_grid(prob: &AttractorProblem, grid: &AttractorGrid, z0: V2, opts: &LabOpts) -> Result<Branch> {
    let n = grid.t.len();
    let mut z = vec![V2::zeros(); n];
    let mut mon = Monitor::new();
    let mut r = vec![V2::zeros(); n];
    for it in 1..=opts.max_iter {
        for j in 0..n {
            let x = grid.x[j] + z[j];
            let lin = (grid.k[j] + prob.m_a) * z[j];
            r[j] = prob.field.eval(&x) - grid.phi[j] - lin + (prob.forcing)(grid.t[j], &x);
        }
        let next = volterra_march(&prob.m_a, grid, z0, &r);
        let d = sup_diff(&next, &z);
        z = next;
        mon.push(d, opts.tol)?;
        if d < opts.tol {
            return Ok(Branch { t: grid.t.clone(), y: z, iterations: it, contraction_ratio: mon.ratio });
        }
    }
    Err(Error::Contraction { ratio: mon.ratio.max(0.9) })
}

/// Forward correction Z on [t_start, t_end] with Z(t_start) = z0, so that
/// X̄ + Z solves X′ = Φ(X) + ψ(t, X). The grid is uniform with step close to `h`.
pub fn attractor_fixed_point(
    prob: &AttractorProblem,
    t_start: f64,
    t_end: f64,
    h: f64,
    z0: V2,
    opts: &LabOpts,
) -> Result<Branch> {
    if z0.norm() > 1e-3 {
        return Err(Error::domain(format!("|y_init| = {:e} exceeds 1e-3", z0.norm())));
    }
    if !(t_end > t_start) || !(h > 0.0) {
        return Err(Error::domain("attractor window must be a nonempty interval"));
    }
    let steps = (((t_end - t_start) / h).ceil() as usize).max(3);
    let h = (t_end - t_start) / steps as f64;
    let t = (0..=steps).map(|i| t_start + h * i as f64).collect();
    let grid = AttractorGrid::new(prob, t);
    attractor_on_grid(prob, &grid, z0, opts)
}

/// Decay rate of a branch from a log-linear fit over its tail, measured in
/// coordinates where the linear flow at `m` is a scaling or rotation-scaling.
pub fn tail_decay_rate(branch: &Branch, m: &M2) -> f64 {
    let q = canonical(m);
    let norms: Vec<f64> = branch.y.iter().map(|z| (q * z).norm()).collect();
    let peak = norms.iter().cloned().fold(0.0, f64::max);
    let from = branch.t.len() / 2;
    let (mut ts, mut ls) = (Vec::new(), Vec::new());
    for i in from..branch.t.len() {
        if norms[i] > 1e-11 * peak {
            ts.push(branch.t[i]);
            ls.push(norms[i].ln());
        }
    }
    if ts.len() < 3 {
        return f64::NAN;
    }
    -linear_fit(&ts, &ls).0
}

/// One member of the perturbed family.
#[derive(Debug, Clone, Serialize)]
pub struct PerturbedOrbit {
    pub lambda: f64,
    pub switch_time: f64,
    pub t: Vec<f64>,
    pub base: Vec<[f64; 2]>,
    pub correction: Vec<[f64; 2]>,
    pub iteration_count: usize,
    pub contraction_ratio: f64,
    /// Perturbed state just before and just after the switch time.
    pub left_limit: [f64; 2],
    pub right_limit: [f64; 2],
    pub gluing_mismatch: f64,
}

impl PerturbedOrbit {
    pub fn state(&self, i: usize) -> [f64; 2] {
        [self.base[i][0] + self.correction[i][0], self.base[i][1] + self.correction[i][1]]
    }

    pub fn max_correction(&self) -> f64 {
        self.correction.iter().map(|c| c[0].abs().max(c[1].abs())).fold(0.0, f64::max)
    }
}

/// Everything about the perturbation problem that does not depend on ψ₁ or λ.
pub struct PerturbationSetup {
    pub hyperbolic: HyperbolicData,
    pub m_a: M2,
    /// Switch time in the orbit's own time.
    pub switch_time: f64,
    dir: f64,
    landscape: Landscape,
    hyp_t: Vec<f64>,
    hyp_x: Vec<V2>,
    hyp_phi: Vec<V2>,
    att: AttractorGrid,
    /// Index in the attractor grid that coincides with the switch time.
    att_switch: usize,
    /// Index in the hyperbolic grid where the attractor grid starts.
    hyp_overlap: usize,
    opts: LabOpts,
}

impl PerturbationSetup {
    pub fn new(orbit: &OrbitSolution, opts: &LabOpts) -> Result<Self> {
        let dir = match orbit.chirality {
            1 => 1.0,
            -1 => -1.0,
            _ => return Err(Error::domain("a stationary orbit has no connection to perturb")),
        };
        let l = orbit.landscape.clone();
        let x_h = V2::new(l.eq.rho_minus, 0.0);
        let x_a = V2::new(l.eq.rho_plus, 0.0);
        let field = Reversed(&l, dir);
        let hyperbolic = HyperbolicData::new(field.jacobian(&x_h))?;
        let m_a = field.jacobian(&x_a);
        let sink_rate = -m_a.trace() / 2.0;
        if !(sink_rate > 0.0) || !(m_a.determinant() > 0.0) {
            return Err(Error::domain("far end of the orbit is not attracting in the working time"));
        }
        let (t0, t1) = orbit.t_range();
        let (w0, w1) = if dir > 0.0 { (t0, t1) } else { (-t1, -t0) };
        let base = |tau: f64| orbit.state_at(dir * tau);

        // switch time, in working time
        let mut taus: Vec<f64> = orbit.samples.iter().map(|s| dir * s.t).collect();
        taus.sort_by(f64::total_cmp);
        let dist = |tau: f64| (base(tau) - x_h).norm() - opts.switch_distance;
        let k = taus.iter().position(|&tau| dist(tau) > 0.0).ok_or_else(|| Error::internal("orbit never leaves the saddle"))?;
        if k == 0 {
            return Err(Error::domain("orbit starts farther than the switch distance from the saddle"));
        }
        let t_switch = brent(dist, taus[k - 1], taus[k], BrentTol { xtol: 1e-12, ftol: 1e-15, max_iter: 200 })?;

        let hyp_t = backward_grid(t_switch, (opts.window_factor / hyperbolic.alpha).max(t_switch - w0), opts);
        let hyp_x: Vec<V2> = hyp_t.iter().map(|&s| base(s)).collect();
        let hyp_phi = hyp_x.iter().map(|v| field.eval(v)).collect();

        let last = hyp_t.len() - 1;
        let hyp_overlap = hyp_t.iter().rposition(|&s| t_switch - s >= opts.overlap).unwrap_or(0);
        let ov = t_switch - hyp_t[hyp_overlap];
        let n_ov = ((ov / opts.h_max).ceil() as usize).max(1);
        let h = ov / n_ov as f64;
        let t_end = w1.max(t_switch) + opts.tail_factor / sink_rate;
        let steps = n_ov + ((t_end - t_switch) / h).ceil() as usize;
        let att_t: Vec<f64> = (0..=steps).map(|i| hyp_t[hyp_overlap] + h * i as f64).collect();
        let zero = |_: f64, _: &V2| V2::zeros();
        let prob = AttractorProblem { field: &field, base: &base, m_a, forcing: &zero };
        let att = AttractorGrid::new(&prob, att_t);
        debug_assert!(last > hyp_overlap);

        Ok(PerturbationSetup {
            hyperbolic,
            m_a,
            switch_time: dir * t_switch,
            dir,
            landscape: l,
            hyp_t,
            hyp_x,
            hyp_phi,
            att,
            att_switch: n_ov,
            hyp_overlap,
            opts: *opts,
        })
    }

    /// Perturbed orbit for one λ.
    pub fn solve(&self, psi: &dyn Perturbation, lambda: f64) -> Result<PerturbedOrbit> {
        let dir = self.dir;
        let field = Reversed(&self.landscape, dir);
        let m_h = self.hyperbolic.matrix();
        let hyp_psi = |j: usize, z: &V2| {
            let x = self.hyp_x[j] + z;
            field.eval(&x) - self.hyp_phi[j] - m_h * z + psi.eval(lambda, dir * self.hyp_t[j], &x) * dir
        };
        let hyp = hyperbolic_on_grid(&self.hyperbolic, &self.hyp_t, &hyp_psi, V2::zeros(), &self.opts)?;

        let forcing = |tau: f64, x: &V2| psi.eval(lambda, dir * tau, x) * dir;
        let no_base = |_: f64| V2::zeros();
        let prob = AttractorProblem { field: &field, base: &no_base, m_a: self.m_a, forcing: &forcing };
        let att = attractor_on_grid(&prob, &self.att, hyp.y[self.hyp_overlap], &self.opts)?;

        let last = hyp.t.len() - 1;
        let zl = hyp.y[last];
        let zr = att.y[self.att_switch];
        let mismatch = (zl - zr).amax();
        if mismatch > 1e-6 {
            return Err(Error::Gluing { mismatch });
        }

        let mut t = Vec::with_capacity(last + 1 + att.t.len());
        let mut base = Vec::with_capacity(t.capacity());
        let mut corr = Vec::with_capacity(t.capacity());
        for j in 0..=last {
            t.push(dir * self.hyp_t[j]);
            base.push(self.hyp_x[j]);
            corr.push(hyp.y[j]);
        }
        for j in self.att_switch + 1..att.t.len() {
            t.push(dir * self.att.t[j]);
            base.push(self.att.x[j]);
            corr.push(att.y[j]);
        }
        if dir < 0.0 {
            t.reverse();
            base.reverse();
            corr.reverse();
        }
        let xs = self.hyp_x[last];
        let (hl, hr) = ([xs[0] + zl[0], xs[1] + zl[1]], [xs[0] + zr[0], xs[1] + zr[1]]);
        let (left_limit, right_limit) = if dir > 0.0 { (hl, hr) } else { (hr, hl) };
        Ok(PerturbedOrbit {
            lambda,
            switch_time: self.switch_time,
            t,
            base: base.iter().map(|v| [v[0], v[1]]).collect(),
            correction: corr.iter().map(|v| [v[0], v[1]]).collect(),
            iteration_count: hyp.iterations + att.iterations,
            contraction_ratio: hyp.contraction_ratio.max(att.contraction_ratio),
            left_limit,
            right_limit,
            gluing_mismatch: mismatch,
        })
    }
}

/// sup over λ ≠ λ̃ of ‖B(λ) − B(λ̃)‖_sup / |λ − λ̃|; `None` with fewer than two
/// distinct λ. All orbits must come from the same setup.
pub fn lipschitz_ratio(orbits: &[PerturbedOrbit]) -> Option<f64> {
    let mut best: Option<f64> = None;
    for (i, p) in orbits.iter().enumerate() {
        for q in &orbits[i + 1..] {
            let dl = (p.lambda - q.lambda).abs();
            if dl == 0.0 {
                continue;
            }
            let d = p
                .correction
                .iter()
                .zip(&q.correction)
                .map(|(a, b)| (a[0] - b[0]).abs().max((a[1] - b[1]).abs()))
                .fold(0.0, f64::max);
            best = Some(best.unwrap_or(0.0).max(d / dl));
        }
    }
    best
}

#[derive(Debug, Clone, Serialize)]
pub struct PerturbedFamily {
    pub orbits: Vec<PerturbedOrbit>,
    pub lipschitz: Option<f64>,
    pub hyperbolic: HyperbolicData,
    pub switch_time: f64,
}

pub fn perturbed_bore(
    orbit: &OrbitSolution,
    psi: &dyn Perturbation,
    lambdas: &[f64],
    opts: &LabOpts,
) -> Result<PerturbedFamily> {
    let setup = PerturbationSetup::new(orbit, opts)?;
    let orbits = lambdas.iter().map(|&l| setup.solve(psi, l)).collect::<Result<Vec<_>>>()?;
    let lipschitz = lipschitz_ratio(&orbits);
    Ok(PerturbedFamily { orbits, lipschitz, hyperbolic: setup.hyperbolic, switch_time: setup.switch_time })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::brent::{brent, BrentTol};
    use crate::orbit::{linearize, shoot_heteroclinic, EquilibriumAt, ShootOpts};
    use crate::params::PhysParams;

    fn ebbing() -> OrbitSolution {
        let p = PhysParams::new(2.0, 1.0, 0.125, 0.75, 0.0, 0.1).unwrap();
        shoot_heteroclinic(&Landscape::new(&p).unwrap(), &ShootOpts::default()).unwrap()
    }

    fn saddle() -> M2 {
        M2::new(0.0, 1.0, 0.5, -0.5)
    }

    #[test]
    fn projection_algebra() {
        let o = ebbing();
        let l = &o.landscape;
        for m in [saddle(), l.jacobian(&V2::new(l.eq.rho_minus, 0.0))] {
            let d = HyperbolicData::new(m).unwrap();
            let (ps, pu) = (d.stable_projection(), d.unstable_projection());
            let id = M2::identity();
            assert!((ps * ps - ps).amax() < 1e-13);
            assert!((pu * pu - pu).amax() < 1e-13);
            assert!((ps * pu).amax() < 1e-13 && (pu * ps).amax() < 1e-13);
            assert!((ps + pu - id).amax() < 1e-13);
            assert!((m * pu - pu * d.lambda_u).amax() < 1e-13);
            assert!(d.k >= 1.0 && d.alpha > 0.0);
        }
        assert!(HyperbolicData::new(M2::new(-1.0, 0.0, 0.0, -2.0)).is_err());
    }

    #[test]
    fn zero_data_gives_zero_branch() {
        let d = HyperbolicData::new(saddle()).unwrap();
        let b = hyperbolic_fixed_point(&d, &|_, _| V2::zeros(), 0.0, V2::zeros(), &LabOpts::default()).unwrap();
        assert!(b.y.iter().all(|v| *v == V2::zeros()));
    }

    #[test]
    fn linear_forcing_matches_variation_of_constants() {
        let d = HyperbolicData::new(saddle()).unwrap();
        let (ls, lu) = (d.lambda_s, d.lambda_u);
        let one = V2::new(1.0, 1.0);
        let (fs, fu) = (d.stable_projection() * one, d.unstable_projection() * one);
        let x_u = d.unstable_direction() * 1e-4;
        let b = hyperbolic_fixed_point(&d, &|t, _| one * (-t.abs()).exp(), 0.0, x_u, &LabOpts::default()).unwrap();
        let mut worst = 0.0f64;
        for (t, y) in b.t.iter().zip(&b.y) {
            let stable = fs * (t.exp() / (1.0 - ls));
            let unstable = x_u * (lu * t).exp() - fu * ((lu * t).exp() * (1.0 - (t * (1.0 - lu)).exp()) / (1.0 - lu));
            worst = worst.max((y - stable - unstable).amax());
        }
        assert!(worst < 1e-8, "{worst:e}");
    }

    #[test]
    fn unstable_manifold_matches_shooting() {
        let o = ebbing();
        let l = o.landscape.clone();
        let x_h = V2::new(l.eq.rho_minus, 0.0);
        let d = HyperbolicData::new(l.jacobian(&x_h)).unwrap();
        let m = d.matrix();
        let psi = |_: f64, y: &V2| l.eval(&(x_h + y)) - m * y;
        let x_u = d.unstable_direction() * 1e-6;
        let b = hyperbolic_fixed_point(&d, &psi, 0.0, x_u, &LabOpts::default()).unwrap();
        // align: the orbit time at which its unstable component equals 1e-6
        let pu = d.unstable_projection();
        let dir = d.unstable_direction();
        let comp = |t: f64| (pu * (o.state_at(t) - x_h)).dot(&dir) - 1e-6;
        let shift = brent(comp, -100.0, 0.0, BrentTol { xtol: 1e-12, ftol: 1e-16, max_iter: 300 }).unwrap();
        let mut worst = 0.0f64;
        for (t, y) in b.t.iter().zip(&b.y) {
            if *t < -40.0 {
                continue;
            }
            worst = worst.max((x_h + y - o.state_at(t + shift)).amax());
        }
        assert!(worst <= 1e-8, "{worst:e}");
    }

    fn sink_problem_parts(o: &OrbitSolution) -> (M2, f64) {
        let l = &o.landscape;
        let m_a = l.jacobian(&V2::new(l.eq.rho_plus, 0.0));
        let s = linearize(EquilibriumAt::RhoPlus, l).unwrap();
        (m_a, s.lambda_plus.re.abs())
    }

    #[test]
    fn attractor_zero_and_decay() {
        let o = ebbing();
        let l = o.landscape.clone();
        let (m_a, rate) = sink_problem_parts(&o);
        let base = |t: f64| o.state_at(t);
        let zero = |_: f64, _: &V2| V2::zeros();
        let prob = AttractorProblem { field: &l, base: &base, m_a, forcing: &zero };
        let opts = LabOpts::default();
        let b = attractor_fixed_point(&prob, -5.0, 200.0, 0.02, V2::zeros(), &opts).unwrap();
        assert!(b.y.iter().all(|v| *v == V2::zeros()));

        let b = attractor_fixed_point(&prob, -5.0, 200.0, 0.02, V2::new(1e-6, 0.0), &opts).unwrap();
        let fit = tail_decay_rate(&b, &m_a);
        assert!((fit - rate).abs() <= 0.1 * rate, "{fit} vs {rate}");
        assert!(b.y.last().unwrap().norm() < 1e-4 * 1e-6);
    }

    #[test]
    fn attractor_matches_direct_integration() {
        // X̄ + Z from the fixed point against the flow of the perturbed field
        let o = ebbing();
        let l = o.landscape.clone();
        let (m_a, _) = sink_problem_parts(&o);
        let base = |t: f64| o.state_at(t);
        let bump = GaussianBump { t0: 0.0, width: 1.0 };
        let forcing = |t: f64, x: &V2| bump.eval(1e-4, t, x);
        let prob = AttractorProblem { field: &l, base: &base, m_a, forcing: &forcing };
        let z0 = V2::new(2e-5, -1e-5);
        let b = attractor_fixed_point(&prob, -5.0, 60.0, 0.02, z0, &LabOpts::default()).unwrap();
        let rhs = |t: f64, x: &V2| l.eval(x) + bump.eval(1e-4, t, x);
        let mut x = base(-5.0) + z0;
        let mut t = -5.0;
        let h = 1e-3;
        let mut worst = 0.0f64;
        let mut next = 1usize;
        while next < b.t.len() && t < 20.0 {
            let k1 = rhs(t, &x);
            let k2 = rhs(t + h / 2.0, &(x + k1 * (h / 2.0)));
            let k3 = rhs(t + h / 2.0, &(x + k2 * (h / 2.0)));
            let k4 = rhs(t + h, &(x + k3 * h));
            x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
            t += h;
            if (t - b.t[next]).abs() < h / 2.0 {
                worst = worst.max((base(b.t[next]) + b.y[next] - x).amax());
                next += 1;
            }
        }
        assert!(worst < 1e-9, "{worst:e}");
    }

    #[test]
    fn bump_response_is_linear_in_amplitude() {
        let o = ebbing();
        let l = o.landscape.clone();
        let (m_a, _) = sink_problem_parts(&o);
        let base = |t: f64| o.state_at(t);
        let sup = |delta: f64| {
            let f = move |t: f64, _: &V2| V2::new(0.0, delta * (-t * t).exp());
            let prob = AttractorProblem { field: &l, base: &base, m_a, forcing: &f };
            let b = attractor_fixed_point(&prob, -10.0, 150.0, 0.02, V2::zeros(), &LabOpts::default()).unwrap();
            b.y.iter().map(|v| v.amax()).fold(0.0, f64::max)
        };
        let (s1, s2) = (sup(1e-4), sup(5e-5));
        assert!(s1 <= 100.0 * 1e-4);
        assert!((s1 / s2 - 2.0).abs() <= 0.2, "{s1:e} {s2:e}");
    }

    #[test]
    fn zero_perturbation_reproduces_base() {
        let o = ebbing();
        let fam = perturbed_bore(&o, &ConstantForce { c: 1.0 }, &[0.0], &LabOpts::default()).unwrap();
        let p = &fam.orbits[0];
        assert!(p.max_correction() <= 1e-10);
        for i in (0..p.t.len()).step_by(97) {
            let s = o.state_at(p.t[i]);
            assert!((p.state(i)[0] - s[0]).abs() <= 1e-8 && (p.state(i)[1] - s[1]).abs() <= 1e-8);
        }
        assert!(p.gluing_mismatch <= 1e-9);
    }

    #[test]
    fn gaussian_family_lipschitz_and_gluing() {
        let o = ebbing();
        let bump = GaussianBump { t0: 0.0, width: 2.0 };
        let opts = LabOpts::default();
        let setup = PerturbationSetup::new(&o, &opts).unwrap();
        let ratio = |d: f64| {
            let orbits = vec![setup.solve(&bump, 0.0).unwrap(), setup.solve(&bump, d).unwrap()];
            for p in &orbits {
                assert!(p.contraction_ratio < 2.0 / 3.0, "{}", p.contraction_ratio);
                assert!(p.gluing_mismatch <= 1e-9, "{:e}", p.gluing_mismatch);
                let (first, last) = (p.correction[0], p.correction[p.correction.len() - 1]);
                assert!(first[0].abs().max(first[1].abs()) < 1e-12);
                assert!(last[0].abs().max(last[1].abs()) < 1e-12);
            }
            lipschitz_ratio(&orbits).unwrap()
        };
        let (r1, r2) = (ratio(1e-3), ratio(5e-4));
        assert!(r1.is_finite() && r1 > 0.0);
        assert!((r1 / r2 - 1.0).abs() <= 0.2, "{r1} {r2}");
    }

    #[test]
    fn gluing_with_forcing_at_the_switch() {
        let o = ebbing();
        let setup = PerturbationSetup::new(&o, &LabOpts::default()).unwrap();
        let bump = GaussianBump { t0: setup.switch_time, width: 0.5 };
        let p = setup.solve(&bump, 1e-4).unwrap();
        let i = p.t.partition_point(|&t| t <= setup.switch_time) - 1;
        let c = p.correction[i];
        assert!(c[0].abs().max(c[1].abs()) > 1e-7);
        assert!(p.gluing_mismatch <= 1e-9, "{:e}", p.gluing_mismatch);
        assert!(p.contraction_ratio < 2.0 / 3.0);
    }

    #[test]
    fn constant_force_shifts_far_state() {
        let o = ebbing();
        let l = o.landscape.clone();
        let (delta, c) = (1e-5, 1.0);
        let fam = perturbed_bore(&o, &ConstantForce { c }, &[delta], &LabOpts::default()).unwrap();
        let p = &fam.orbits[0];
        let end = p.state(p.t.len() - 1);
        // Newton on F(ρ) + cδ = 0 from ρ₊
        let mut rho = l.eq.rho_plus;
        for _ in 0..20 {
            rho -= (l.f(rho) + c * delta) / l.df(rho);
        }
        let shift = end[0] - l.eq.rho_plus;
        let predicted = -c * delta / l.df(l.eq.rho_plus);
        assert!((end[0] - rho).abs() < 1e-3 * (rho - l.eq.rho_plus).abs(), "{} vs {}", end[0], rho);
        assert!((shift - predicted).abs() < 1e-2 * predicted.abs());
        assert!(end[1].abs() < 1e-10);
    }

    #[test]
    fn surging_orbit_is_handled_in_reverse() {
        let p = PhysParams::new(1.0, 1.0, 25.0, 0.855, 0.0, 0.1).unwrap();
        let o = shoot_heteroclinic(&Landscape::new(&p).unwrap(), &ShootOpts::default()).unwrap();
        assert_eq!(o.chirality, -1);
        let bump = GaussianBump { t0: 0.0, width: 1.0 };
        let fam = perturbed_bore(&o, &bump, &[0.0, 1e-4], &LabOpts::default()).unwrap();
        assert!(fam.orbits[0].max_correction() == 0.0);
        let q = &fam.orbits[1];
        assert!(q.t.windows(2).all(|w| w[0] < w[1]));
        assert!(q.gluing_mismatch <= 1e-9 && q.max_correction() > 0.0);
        assert!(fam.switch_time > 0.0);
    }

    #[test]
    fn stationary_orbit_rejected() {
        let o = ebbing();
        let s = OrbitSolution::stationary(&o.landscape, o.landscape.eq.rho_plus, (-1.0, 1.0));
        assert!(PerturbationSetup::new(&s, &LabOpts::default()).err().unwrap().is_domain());
    }
}
