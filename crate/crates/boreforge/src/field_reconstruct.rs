//! Leading-order two-dimensional bore fields on the flattened strip.
//!
//! Nodes are tensor products of an x grid and ŷ = y/ε ∈ [0, 1]; the flattened
//! vertical coordinate is y = εŷ and the physical height is yζ(x).

use nalgebra::Matrix2;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::numerics::fd;
use crate::params::PhysParams;
use crate::shallow_profile::{ProfilePoint, ShallowProfile};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Frame {
    Lab,
    /// Velocities seen by an observer moving with speed 4 + ε²γ̄.
    Traveling,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridSpec {
    pub nx: usize,
    pub ny: usize,
    pub x_range: (f64, f64),
}

impl GridSpec {
    /// Grid over the part of the orbit where ρ is farther than `tol` from its limits.
    pub fn active(profile: &ShallowProfile, nx: usize, ny: usize, tol: f64) -> Self {
        GridSpec { nx, ny, x_range: profile.orbit.active_window(tol) }
    }
}

/// (u₁ − U, u₂, p) of the ansatz at flattened height y, lab frame.
pub fn ansatz_parts(pt: &ProfilePoint, eps: f64, y: f64) -> (f64, f64, f64) {
    let zeta = pt.h.value();
    let s = y * zeta / eps;
    let e2 = eps * eps;
    let u1_dev = e2 * (s * pt.u1.value() + 0.5 * s * s * pt.u2.value());
    let u2 = -y * zeta * pt.u.d(1) - e2 * eps * (0.5 * s * s * pt.u1.d(1) + s * s * s / 6.0 * pt.u2.d(1));
    let p = pt.p.value() + e2 * (s * pt.p1.value() + 0.5 * s * s * pt.p2.value());
    (u1_dev, u2, p)
}

/// (u₁, u₂, p) of the ansatz at flattened height y, lab frame.
pub fn ansatz_at(pt: &ProfilePoint, eps: f64, y: f64) -> (f64, f64, f64) {
    let (dev, u2, p) = ansatz_parts(pt, eps, y);
    (pt.u.value() + dev, u2, p)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FieldGrid {
    pub eps: f64,
    pub frame: Frame,
    /// Signed speed of the traveling frame; negative for a reflected grid.
    pub frame_speed: f64,
    /// +1, or −1 after reflection x ↦ −x.
    pub orientation: f64,
    pub x_nodes: Vec<f64>,
    pub yhat_nodes: Vec<f64>,
    pub zeta: Vec<f64>,
    pub zeta_x: Vec<f64>,
    pub zeta_xx: Vec<f64>,
    /// u₁ = u1_base[ix] + u1_dev[ix * ny + iy]; the split keeps the small
    /// vertical variation free of the baseline's rounding error.
    pub u1_base: Vec<f64>,
    /// Node values indexed by `ix * ny + iy`.
    pub u1_dev: Vec<f64>,
    pub u2: Vec<f64>,
    pub p: Vec<f64>,
}

pub fn reconstruct(profile: &ShallowProfile, params: &PhysParams, spec: &GridSpec) -> Result<FieldGrid> {
    let pp = &profile.params;
    if (pp.mu(), pp.a(), pp.g(), pp.flux()) != (params.mu(), params.a(), params.g(), params.flux()) {
        return Err(Error::domain("field parameters (mu, a, g, A) differ from the profile's"));
    }
    if spec.nx < 6 || spec.ny < 6 {
        return Err(Error::domain(format!("grid too small: nx = {}, ny = {} (need at least 6)", spec.nx, spec.ny)));
    }
    let (lo, hi) = spec.x_range;
    let (t0, t1) = profile.x_range();
    if !(lo < hi) || lo < t0 || hi > t1 {
        return Err(Error::domain(format!(
            "grid x-range [{lo}, {hi}] is not inside the orbit domain [{t0}, {t1}]"
        )));
    }
    let eps = params.eps();
    let x_nodes: Vec<f64> = (0..spec.nx).map(|i| lo + (hi - lo) * i as f64 / (spec.nx - 1) as f64).collect();
    let yhat_nodes: Vec<f64> = (0..spec.ny).map(|j| j as f64 / (spec.ny - 1) as f64).collect();
    let n = spec.nx * spec.ny;
    let mut g = FieldGrid {
        eps,
        frame: Frame::Lab,
        frame_speed: params.frame_speed(),
        orientation: 1.0,
        x_nodes: x_nodes.clone(),
        yhat_nodes: yhat_nodes.clone(),
        zeta: Vec::with_capacity(spec.nx),
        zeta_x: Vec::with_capacity(spec.nx),
        zeta_xx: Vec::with_capacity(spec.nx),
        u1_base: Vec::with_capacity(spec.nx),
        u1_dev: Vec::with_capacity(n),
        u2: Vec::with_capacity(n),
        p: Vec::with_capacity(n),
    };
    for &x in &x_nodes {
        let pt = profile.at(x);
        g.zeta.push(pt.h.value());
        g.zeta_x.push(pt.h.d(1));
        g.zeta_xx.push(pt.h.d(2));
        g.u1_base.push(pt.u.value());
        for &yh in &yhat_nodes {
            let (u1, u2, p) = ansatz_parts(&pt, eps, eps * yh);
            g.u1_dev.push(u1);
            g.u2.push(u2);
            g.p.push(p);
        }
    }
    Ok(g)
}

impl FieldGrid {
    pub fn nx(&self) -> usize {
        self.x_nodes.len()
    }

    pub fn ny(&self) -> usize {
        self.yhat_nodes.len()
    }

    pub fn idx(&self, ix: usize, iy: usize) -> usize {
        ix * self.ny() + iy
    }

    pub fn y(&self, iy: usize) -> f64 {
        self.eps * self.yhat_nodes[iy]
    }

    pub fn hx(&self) -> f64 {
        self.x_nodes[1] - self.x_nodes[0]
    }

    pub fn hyhat(&self) -> f64 {
        self.yhat_nodes[1] - self.yhat_nodes[0]
    }

    pub fn in_frame(&self, frame: Frame) -> FieldGrid {
        let mut out = self.clone();
        let shift = match (self.frame, frame) {
            (Frame::Lab, Frame::Traveling) => -self.frame_speed,
            (Frame::Traveling, Frame::Lab) => self.frame_speed,
            _ => 0.0,
        };
        for v in &mut out.u1_base {
            *v += shift;
        }
        out.frame = frame;
        out
    }

    /// Horizontal velocity in the grid's frame.
    pub fn u1(&self) -> Vec<f64> {
        let ny = self.ny();
        self.u1_dev.iter().enumerate().map(|(k, d)| self.u1_base[k / ny] + d).collect()
    }

    /// Column baselines of u₁ in the lab frame.
    pub fn lab_u1_base(&self) -> Vec<f64> {
        let shift = if self.frame == Frame::Traveling { self.frame_speed } else { 0.0 };
        self.u1_base.iter().map(|v| v + shift).collect()
    }

    /// Lab-frame horizontal velocity.
    pub fn lab_u1(&self) -> Vec<f64> {
        let ny = self.ny();
        let base = self.lab_u1_base();
        self.u1_dev.iter().enumerate().map(|(k, d)| base[k / ny] + d).collect()
    }

    /// The same configuration seen under x ↦ −x: u₁ and ζ′ change sign, the
    /// frame speed and orientation flip.
    pub fn reflected(&self) -> FieldGrid {
        let (nx, ny) = (self.nx(), self.ny());
        let rev = |v: &[f64], s: f64| v.iter().rev().map(|x| s * x).collect::<Vec<_>>();
        let field = |v: &[f64], s: f64| {
            let mut out = Vec::with_capacity(v.len());
            for ix in (0..nx).rev() {
                out.extend(v[ix * ny..(ix + 1) * ny].iter().map(|x| s * x));
            }
            out
        };
        FieldGrid {
            eps: self.eps,
            frame: self.frame,
            frame_speed: -self.frame_speed,
            orientation: -self.orientation,
            x_nodes: rev(&self.x_nodes, -1.0),
            yhat_nodes: self.yhat_nodes.clone(),
            zeta: rev(&self.zeta, 1.0),
            zeta_x: rev(&self.zeta_x, -1.0),
            zeta_xx: rev(&self.zeta_xx, 1.0),
            u1_base: rev(&self.u1_base, -1.0),
            u1_dev: field(&self.u1_dev, -1.0),
            u2: field(&self.u2, 1.0),
            p: field(&self.p, 1.0),
        }
    }
}

/// Flattening geometry per x column.
#[derive(Debug, Clone, PartialEq)]
pub struct GeometryOps {
    pub eps: f64,
    pub nx: usize,
    pub ny: usize,
    pub hx: f64,
    pub hyhat: f64,
    pub yhat: Vec<f64>,
    pub zeta: Vec<f64>,
    pub zeta_x: Vec<f64>,
    /// 𝒩 = (−εζ′, 1) on the top boundary.
    pub normal: Vec<[f64; 2]>,
    /// ℋ(εζ) = εζ″/(1 + ε²ζ′²)^{3/2}
    pub mean_curv: Vec<f64>,
}

impl GeometryOps {
    pub fn new(grid: &FieldGrid) -> Self {
        let eps = grid.eps;
        let normal = grid.zeta_x.iter().map(|&d| [-eps * d, 1.0]).collect();
        let mean_curv = grid
            .zeta_x
            .iter()
            .zip(&grid.zeta_xx)
            .map(|(&d, &dd)| eps * dd / (1.0 + eps * eps * d * d).powf(1.5))
            .collect();
        GeometryOps {
            eps,
            nx: grid.nx(),
            ny: grid.ny(),
            hx: grid.hx(),
            hyhat: grid.hyhat(),
            yhat: grid.yhat_nodes.clone(),
            zeta: grid.zeta.clone(),
            zeta_x: grid.zeta_x.clone(),
            normal,
            mean_curv,
        }
    }

    /// 𝒜_ζ = ∇𝔉_ζ^{-T} at node (ix, iy).
    pub fn a_matrix(&self, ix: usize, iy: usize) -> Matrix2<f64> {
        let y = self.eps * self.yhat[iy];
        let z = self.zeta[ix];
        Matrix2::new(1.0, -y * self.zeta_x[ix] / z, 0.0, 1.0 / z)
    }

    /// det ∇𝔉_ζ = ζ
    pub fn jacobian_det(&self, ix: usize) -> f64 {
        self.zeta[ix]
    }

    /// Plain flattened derivatives (∂ₓf, ∂_y f).
    pub fn partials(&self, f: &[f64]) -> (Vec<f64>, Vec<f64>) {
        self.partials_split(None, f)
    }

    /// Derivatives of f = base[ix] + dev[k]; the vertical derivative only sees `dev`.
    pub fn partials_split(&self, base: Option<&[f64]>, f: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let (nx, ny) = (self.nx, self.ny);
        let dbase = base.map(|b| fd::d1(b, self.hx));
        let mut fx = vec![0.0; nx * ny];
        let mut fy = vec![0.0; nx * ny];
        let mut col = vec![0.0; nx];
        for iy in 0..ny {
            for ix in 0..nx {
                col[ix] = f[ix * ny + iy];
            }
            for (ix, v) in fd::d1(&col, self.hx).into_iter().enumerate() {
                fx[ix * ny + iy] = v + dbase.as_ref().map_or(0.0, |d| d[ix]);
            }
        }
        for ix in 0..nx {
            let d = fd::d1(&f[ix * ny..(ix + 1) * ny], self.hyhat);
            for (iy, v) in d.into_iter().enumerate() {
                fy[ix * ny + iy] = v / self.eps;
            }
        }
        (fx, fy)
    }

    /// ∇^𝒜 f = (∂ₓf − (yζ′/ζ)∂_y f, ∂_y f / ζ)
    pub fn grad_a(&self, f: &[f64]) -> (Vec<f64>, Vec<f64>) {
        self.grad_a_split(None, f)
    }

    pub fn grad_a_split(&self, base: Option<&[f64]>, f: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let (fx, fy) = self.partials_split(base, f);
        let mut g1 = fx;
        let mut g2 = fy;
        for ix in 0..self.nx {
            let z = self.zeta[ix];
            for iy in 0..self.ny {
                let k = ix * self.ny + iy;
                let y = self.eps * self.yhat[iy];
                g1[k] -= y * self.zeta_x[ix] / z * g2[k];
                g2[k] /= z;
            }
        }
        (g1, g2)
    }
}

/// ∇^𝒜·u on every node.
pub fn divergence(grid: &FieldGrid, geom: &GeometryOps) -> Vec<f64> {
    let (d11, _) = geom.grad_a_split(Some(&grid.u1_base), &grid.u1_dev);
    let (_, d22) = geom.grad_a(&grid.u2);
    d11.iter().zip(&d22).map(|(a, b)| a + b).collect()
}

/// Sup of the flattened divergence over interior nodes.
pub fn divergence_check(grid: &FieldGrid, geom: &GeometryOps) -> f64 {
    let div = divergence(grid, geom);
    let mut sup = 0.0f64;
    for ix in 1..grid.nx() - 1 {
        for iy in 1..grid.ny() - 1 {
            sup = sup.max(div[grid.idx(ix, iy)].abs());
        }
    }
    sup
}

/// ω = ∂₁u₂ − ∂₂u₁ in physical coordinates, per node.
pub fn vorticity(grid: &FieldGrid, geom: &GeometryOps) -> Vec<f64> {
    let (d1u2, _) = geom.grad_a(&grid.u2);
    let (_, d2u1) = geom.grad_a_split(Some(&grid.u1_base), &grid.u1_dev);
    d1u2.iter().zip(&d2u1).map(|(a, b)| a - b).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Streamline {
    pub seed_yhat: f64,
    /// (x, y, physical height yζ)
    pub points: Vec<[f64; 3]>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StreamlineSet {
    pub lines: Vec<Streamline>,
    pub warnings: Vec<String>,
}

pub fn default_seeds(count: usize) -> Vec<f64> {
    (1..=count).map(|k| k as f64 / (count + 1) as f64).collect()
}

/// Streamlines of the traveling-frame flow, traced with RK4 from seeds on the
/// left edge of the grid. Seeds are given as ŷ values; those outside [0, 1]
/// are skipped with a warning.
pub fn streamlines(profile: &ShallowProfile, grid: &FieldGrid, seeds: &[f64]) -> Result<StreamlineSet> {
    let eps = grid.eps;
    let c = grid.frame_speed;
    // Along a streamline dy/dx = (w₂ − yζ′w₁)/(ζw₁) with w = u − c e₁.
    let slope = |x: f64, y: f64| -> Result<f64> {
        let pt = profile.at(x);
        let (u1, u2, _) = ansatz_at(&pt, eps, y);
        let w1 = u1 - c;
        if w1.abs() < 1e-12 {
            return Err(Error::internal(format!("stagnant traveling-frame velocity at x = {x}")));
        }
        Ok((u2 - y * pt.h.d(1) * w1) / (pt.h.value() * w1))
    };
    let x0 = grid.x_nodes[0];
    let x1 = grid.x_nodes[grid.nx() - 1];
    let steps = 4 * (grid.nx() - 1);
    let h = (x1 - x0) / steps as f64;
    let mut out = StreamlineSet { lines: Vec::new(), warnings: Vec::new() };
    for &s in seeds {
        if !(0.0..=1.0).contains(&s) {
            out.warnings.push(format!("seed at yhat = {s} lies outside the strip, skipped"));
            continue;
        }
        let mut y = eps * s;
        let mut pts = Vec::with_capacity(steps + 1);
        let height = |x: f64, y: f64| y * profile.at(x).h.value();
        pts.push([x0, y, height(x0, y)]);
        for k in 0..steps {
            let x = x0 + k as f64 * h;
            let k1 = slope(x, y)?;
            let k2 = slope(x + h / 2.0, y + h / 2.0 * k1)?;
            let k3 = slope(x + h / 2.0, y + h / 2.0 * k2)?;
            let k4 = slope(x + h, y + h * k3)?;
            y += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            let xn = x0 + (k + 1) as f64 * h;
            pts.push([xn, y, height(xn, y)]);
        }
        out.lines.push(Streamline { seed_yhat: s, points: pts });
    }
    Ok(out)
}
