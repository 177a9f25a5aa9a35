//! Residuals of the flattened free-boundary Navier-Stokes system evaluated on
//! reconstructed fields.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::field_reconstruct::{reconstruct, FieldGrid, Frame, GeometryOps, GridSpec};
use crate::numerics::{fd, linear_fit};
use crate::params::PhysParams;
use crate::shallow_profile::ShallowProfile;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Default)]
pub struct Norms {
    /// Root mean square over the nodes (bulk: x by ŷ, boundary: x).
    pub l2: f64,
    pub sup: f64,
}

impl Norms {
    fn of<'a>(v: impl Iterator<Item = &'a f64>) -> Self {
        let (mut sq, mut sup, mut n) = (0.0, 0.0f64, 0usize);
        for x in v {
            sq += x * x;
            sup = sup.max(x.abs());
            n += 1;
        }
        Norms { l2: (sq / n.max(1) as f64).sqrt(), sup }
    }

    fn is_finite(&self) -> bool {
        self.l2.is_finite() && self.sup.is_finite()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidualReport {
    pub momentum1: Norms,
    pub momentum2: Norms,
    /// Sup of ∇^𝒜·u.
    pub divergence: f64,
    pub stress_bc1: Norms,
    pub stress_bc2: Norms,
    pub slip_bc: Norms,
    /// Regularized flux equation.
    pub flux_eq: Norms,
    /// Plain form (c − mean u₁)ζ − Â.
    pub flux_plain: Norms,
    pub eps: f64,
    /// sup |u| (lab frame), the scale used by `relative`.
    pub field_scale: f64,
    /// Set when halving the x resolution moves some residual by more than 25%.
    pub refinement_flag: bool,
    pub refinement_note: Option<String>,
}

impl ResidualReport {
    fn entries(&self) -> [(&'static str, Norms); 7] {
        [
            ("momentum1", self.momentum1),
            ("momentum2", self.momentum2),
            ("stress_bc1", self.stress_bc1),
            ("stress_bc2", self.stress_bc2),
            ("slip_bc", self.slip_bc),
            ("flux_eq", self.flux_eq),
            ("flux_plain", self.flux_plain),
        ]
    }

    /// Largest sup-norm among all entries, including the divergence.
    pub fn max_sup(&self) -> f64 {
        self.entries().iter().map(|(_, n)| n.sup).fold(self.divergence, f64::max)
    }

    /// Combined bulk momentum norm √(m₁² + m₂²) in the L² sense.
    pub fn momentum_l2(&self) -> f64 {
        self.momentum1.l2.hypot(self.momentum2.l2)
    }

    /// L² norms divided by the field scale.
    pub fn relative(&self) -> Vec<(&'static str, f64)> {
        self.entries().iter().map(|(k, n)| (*k, n.l2 / self.field_scale)).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.divergence.is_finite() && self.entries().iter().all(|(_, n)| n.is_finite())
    }
}

/// Per-node residual fields.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualFields {
    pub momentum1: Vec<f64>,
    pub momentum2: Vec<f64>,
    pub divergence: Vec<f64>,
    pub stress1: Vec<f64>,
    pub stress2: Vec<f64>,
    pub slip: Vec<f64>,
    pub flux: Vec<f64>,
    pub flux_plain: Vec<f64>,
}

pub fn residual_fields(grid: &FieldGrid, geom: &GeometryOps, params: &PhysParams) -> Result<ResidualFields> {
    if (grid.eps - params.eps()).abs() > 1e-15 * params.eps() {
        return Err(Error::domain(format!("grid eps {} differs from parameter eps {}", grid.eps, params.eps())));
    }
    let (nx, ny) = (grid.nx(), grid.ny());
    let (mu, a, g, sigma, eps) = (params.mu(), params.a(), params.g(), params.sigma(), params.eps());
    let s = grid.orientation;
    let c = grid.frame_speed;
    let a_hat = s * params.tuned().a_hat;
    let base = grid.lab_u1_base();
    let u1 = grid.lab_u1();
    let u2 = &grid.u2;

    let (d1u1, d2u1) = geom.grad_a_split(Some(&base), &grid.u1_dev);
    let (d1u2, d2u2) = geom.grad_a(u2);
    let (d1p, d2p) = geom.grad_a(&grid.p);
    let lap = |d1: &[f64], d2: &[f64]| -> Vec<f64> {
        let (dd1, _) = geom.grad_a(d1);
        let (_, dd2) = geom.grad_a(d2);
        dd1.iter().zip(&dd2).map(|(x, y)| x + y).collect()
    };
    let lap1 = lap(&d1u1, &d2u1);
    let lap2 = lap(&d1u2, &d2u2);

    let n = nx * ny;
    let mut momentum1 = Vec::with_capacity(n);
    let mut momentum2 = Vec::with_capacity(n);
    let mut divergence = Vec::with_capacity(n);
    for k in 0..n {
        let w1 = u1[k] - c;
        momentum1.push(w1 * d1u1[k] + u2[k] * d2u1[k] + d1p[k] - mu * lap1[k] - 4.0 * a * s);
        momentum2.push(w1 * d1u2[k] + u2[k] * d2u2[k] + d2p[k] - mu * lap2[k]);
        divergence.push(d1u1[k] + d2u2[k]);
    }

    let top = ny - 1;
    let mut stress1 = Vec::with_capacity(nx);
    let mut stress2 = Vec::with_capacity(nx);
    let mut slip = Vec::with_capacity(nx);
    let mut means = Vec::with_capacity(nx);
    let mut u_dot_n = Vec::with_capacity(nx);
    for ix in 0..nx {
        let k = ix * ny + top;
        let nrm = geom.normal[ix];
        let d11 = 2.0 * d1u1[k];
        let d12 = d2u1[k] + d1u2[k];
        let d22 = 2.0 * d2u2[k];
        let load = g * grid.zeta[ix] - eps * sigma * geom.mean_curv[ix];
        let p = grid.p[k];
        stress1.push(-p * nrm[0] + mu * (d11 * nrm[0] + d12 * nrm[1]) + load * nrm[0]);
        stress2.push(-p * nrm[1] + mu * (d12 * nrm[0] + d22 * nrm[1]) + load * nrm[1]);
        u_dot_n.push(u1[k] * nrm[0] + u2[k] * nrm[1]);

        let b = ix * ny;
        slip.push(mu * d2u1[b] - eps * a * u1[b]);
        means.push(base[ix] + fd::simpson(&grid.u1_dev[b..b + ny], grid.hyhat()));
    }
    let dun = fd::d1(&u_dot_n, grid.hx());
    let mut flux = Vec::with_capacity(nx);
    let mut flux_plain = Vec::with_capacity(nx);
    for ix in 0..nx {
        let d = (c - means[ix]) * grid.zeta[ix];
        flux_plain.push(d - a_hat);
        flux.push(d - c * grid.zeta_xx[ix] - dun[ix] / eps - a_hat);
    }
    Ok(ResidualFields { momentum1, momentum2, divergence, stress1, stress2, slip, flux, flux_plain })
}

fn report_from(fields: &ResidualFields, grid: &FieldGrid) -> ResidualReport {
    let field_scale = grid
        .lab_u1()
        .iter()
        .zip(&grid.u2)
        .map(|(a, b)| a.hypot(*b))
        .fold(0.0, f64::max);
    ResidualReport {
        momentum1: Norms::of(fields.momentum1.iter()),
        momentum2: Norms::of(fields.momentum2.iter()),
        divergence: Norms::of(fields.divergence.iter()).sup,
        stress_bc1: Norms::of(fields.stress1.iter()),
        stress_bc2: Norms::of(fields.stress2.iter()),
        slip_bc: Norms::of(fields.slip.iter()),
        flux_eq: Norms::of(fields.flux.iter()),
        flux_plain: Norms::of(fields.flux_plain.iter()),
        eps: grid.eps,
        field_scale,
        refinement_flag: false,
        refinement_note: None,
    }
}

/// Every other x node.
fn coarsen(grid: &FieldGrid) -> FieldGrid {
    let ny = grid.ny();
    let keep: Vec<usize> = (0..grid.nx()).step_by(2).collect();
    let pick = |v: &[f64]| keep.iter().map(|&i| v[i]).collect::<Vec<_>>();
    let pick2 = |v: &[f64]| keep.iter().flat_map(|&i| v[i * ny..(i + 1) * ny].iter().copied()).collect::<Vec<_>>();
    FieldGrid {
        x_nodes: pick(&grid.x_nodes),
        zeta: pick(&grid.zeta),
        zeta_x: pick(&grid.zeta_x),
        zeta_xx: pick(&grid.zeta_xx),
        u1_base: pick(&grid.u1_base),
        u1_dev: pick2(&grid.u1_dev),
        u2: pick2(&grid.u2),
        p: pick2(&grid.p),
        ..grid.clone()
    }
}

pub fn evaluate_residuals(grid: &FieldGrid, geom: &GeometryOps, params: &PhysParams) -> Result<ResidualReport> {
    let fine = report_from(&residual_fields(grid, geom, params)?, grid);
    let mut report = fine.clone();
    if grid.nx() >= 11 {
        let cg = coarsen(grid);
        let coarse = report_from(&residual_fields(&cg, &GeometryOps::new(&cg), params)?, &cg);
        let drift: Vec<String> = fine
            .entries()
            .iter()
            .zip(coarse.entries().iter())
            .filter(|((_, f), (_, c))| (c.l2 - f.l2).abs() > 0.25 * f.l2 + 1e-10)
            .map(|((k, f), (_, c))| format!("{k}: {:.3e} at nx/2 vs {:.3e}", c.l2, f.l2))
            .collect();
        if !drift.is_empty() {
            report.refinement_flag = true;
            report.refinement_note = Some(format!("residual not grid-converged ({})", drift.join("; ")));
        }
    }
    Ok(report)
}

/// The constant-height shear solution ζ = H, u = b(y)e₁, p = gH.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ShearFlow {
    pub h: f64,
    pub eps: f64,
    pub mu: f64,
    pub a: f64,
    pub g: f64,
}

impl ShearFlow {
    /// b(y) = 4H + 4(a/μ)H²(εy − y²/2)
    pub fn b(&self, y: f64) -> f64 {
        4.0 * self.h + self.b_dev(y)
    }

    /// b(y) − 4H
    pub fn b_dev(&self, y: f64) -> f64 {
        4.0 * (self.a / self.mu) * self.h * self.h * (self.eps * y - 0.5 * y * y)
    }

    pub fn db(&self, y: f64) -> f64 {
        4.0 * (self.a / self.mu) * self.h * self.h * (self.eps - y)
    }

    pub fn pressure(&self) -> f64 {
        self.g * self.h
    }

    /// Sample onto a lab-frame grid.
    pub fn grid(&self, params: &PhysParams, nx: usize, ny: usize, x_range: (f64, f64)) -> FieldGrid {
        let (lo, hi) = x_range;
        let x_nodes: Vec<f64> = (0..nx).map(|i| lo + (hi - lo) * i as f64 / (nx - 1) as f64).collect();
        let yhat_nodes: Vec<f64> = (0..ny).map(|j| j as f64 / (ny - 1) as f64).collect();
        let col: Vec<f64> = yhat_nodes.iter().map(|&yh| self.b_dev(self.eps * yh)).collect();
        FieldGrid {
            eps: self.eps,
            frame: Frame::Lab,
            frame_speed: params.frame_speed(),
            orientation: 1.0,
            x_nodes,
            yhat_nodes,
            zeta: vec![self.h; nx],
            zeta_x: vec![0.0; nx],
            zeta_xx: vec![0.0; nx],
            u1_base: vec![4.0 * self.h; nx],
            u1_dev: col.iter().copied().cycle().take(nx * ny).collect(),
            u2: vec![0.0; nx * ny],
            p: vec![self.pressure(); nx * ny],
        }
    }
}

pub fn shear_flow_exact(params: &PhysParams, h: f64) -> Result<ShearFlow> {
    if !(h > 0.0) {
        return Err(Error::domain(format!("shear height must be positive, got {h}")));
    }
    Ok(ShearFlow { h, eps: params.eps(), mu: params.mu(), a: params.a(), g: params.g() })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub eps: f64,
    pub momentum1_l2: f64,
    pub momentum2_l2: f64,
    pub stress1: f64,
    pub stress2: f64,
    pub slip: f64,
    pub flux: f64,
    /// Order of the combined momentum norm against the previous row.
    pub fitted_order: Option<f64>,
    pub report: ResidualReport,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpsSweep {
    pub rows: Vec<SweepRow>,
    /// Least-squares slope of log(momentum norm) against log ε.
    pub fitted_order: f64,
}

/// Residual row for one ε; `fitted_order` is left empty.
pub fn sweep_point(profile: &ShallowProfile, eps: f64, spec: &GridSpec) -> Result<SweepRow> {
    let p = profile.params.with_eps(eps)?;
    let grid = reconstruct(profile, &p, spec)?;
    let rep = evaluate_residuals(&grid, &GeometryOps::new(&grid), &p)?;
    Ok(SweepRow {
        eps,
        momentum1_l2: rep.momentum1.l2,
        momentum2_l2: rep.momentum2.l2,
        stress1: rep.stress_bc1.l2,
        stress2: rep.stress_bc2.l2,
        slip: rep.slip_bc.l2,
        flux: rep.flux_eq.l2,
        fitted_order: None,
        report: rep,
    })
}

/// Fill in the pairwise and least-squares orders of rows given in sweep order.
pub fn assemble_sweep(mut rows: Vec<SweepRow>) -> EpsSweep {
    for i in 1..rows.len() {
        let (prev, cur) = (&rows[i - 1], &rows[i]);
        let order = (prev.report.momentum_l2() / cur.report.momentum_l2()).ln() / (prev.eps / cur.eps).ln();
        rows[i].fitted_order = Some(order);
    }
    let fitted_order = if rows.len() >= 2 {
        let lx: Vec<f64> = rows.iter().map(|r| r.eps.ln()).collect();
        let ly: Vec<f64> = rows.iter().map(|r| r.report.momentum_l2().ln()).collect();
        linear_fit(&lx, &ly).0
    } else {
        f64::NAN
    };
    EpsSweep { rows, fitted_order }
}

/// Residuals of one profile as ε varies; the orbit does not depend on ε.
pub fn eps_sweep(profile: &ShallowProfile, eps_values: &[f64], spec: &GridSpec) -> Result<EpsSweep> {
    let rows = eps_values.iter().map(|&eps| sweep_point(profile, eps, spec)).collect::<Result<Vec<_>>>()?;
    Ok(assemble_sweep(rows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::landscape::Landscape;
    use crate::orbit::{shoot_heteroclinic, OrbitSolution, ShootOpts};
    use crate::shallow_profile::build_profile;

    fn ebbing(eps: f64) -> (PhysParams, ShallowProfile) {
        let p = PhysParams::new(2.0, 1.0, 0.125, 0.75, 0.0, eps).unwrap();
        let l = Landscape::new(&p).unwrap();
        let o = shoot_heteroclinic(&l, &ShootOpts::default()).unwrap();
        (p, build_profile(&o, &p).unwrap())
    }

    #[test]
    fn shear_closed_form_values() {
        let p = PhysParams::new(1.0, 1.0, 0.125, 0.75, 0.0, 0.1).unwrap();
        let s = shear_flow_exact(&p, 0.75).unwrap();
        assert!((s.b(0.0) - 3.0).abs() < 1e-15);
        assert!((s.b(0.1) - 3.01125).abs() < 1e-14);
        // slip: μ∂₂^𝒜 b(0) = (μ/H)b′(0) equals εa b(0)
        let lhs = p.mu() / s.h * s.db(0.0);
        assert!((lhs - 0.1 * p.a() * s.b(0.0)).abs() < 1e-15);
        let t = p.tuned();
        for h in [p.equilibria().h_minus, p.equilibria().h_plus] {
            let cubic = p.frame_speed() * h - 4.0 * h * h - 0.01 * (4.0 / 3.0) * h.powi(3);
            assert!((cubic - t.a_hat).abs() < 1e-12);
        }
        assert!(shear_flow_exact(&p, 0.0).is_err());
    }

    #[test]
    fn shear_is_an_exact_solution() {
        for eps in [0.05, 0.1, 0.2] {
            let p = PhysParams::new(1.7, 0.6, 3.0, 0.6, 0.4, eps).unwrap();
            let eq = p.equilibria();
            for h in [eq.h_minus, eq.h_plus] {
                let g = shear_flow_exact(&p, h).unwrap().grid(&p, 256, 256, (-2.0, 2.0));
                let rep = evaluate_residuals(&g, &GeometryOps::new(&g), &p).unwrap();
                assert!(rep.max_sup() <= 1e-8, "eps {eps} h {h}: {rep:?}");
                assert!(!rep.refinement_flag);
            }
        }
    }

    #[test]
    fn shear_matches_stationary_profile_fields() {
        let p = PhysParams::new(2.0, 1.0, 0.125, 0.75, 0.0, 0.1).unwrap();
        let l = Landscape::new(&p).unwrap();
        let o = OrbitSolution::stationary(&l, l.eq.rho_minus, (-2.0, 2.0));
        let prof = build_profile(&o, &p).unwrap();
        let a = reconstruct(&prof, &p, &GridSpec { nx: 9, ny: 9, x_range: (-2.0, 2.0) }).unwrap();
        let b = shear_flow_exact(&p, l.eq.h_minus).unwrap().grid(&p, 9, 9, (-2.0, 2.0));
        for (x, y) in a.u1().iter().zip(&b.u1()).chain(a.p.iter().zip(&b.p)) {
            assert!((x - y).abs() < 1e-14);
        }
    }

    #[test]
    fn surface_tension_only_touches_stress() {
        let (p, prof) = ebbing(0.1);
        let spec = GridSpec::active(&prof, 96, 9, 1e-8);
        let q = p.with_sigma(1.0).unwrap();
        let g0 = reconstruct(&prof, &p, &spec).unwrap();
        let g1 = reconstruct(&prof, &q, &spec).unwrap();
        let r0 = evaluate_residuals(&g0, &GeometryOps::new(&g0), &p).unwrap();
        let r1 = evaluate_residuals(&g1, &GeometryOps::new(&g1), &q).unwrap();
        assert_eq!(r0.momentum1, r1.momentum1);
        assert_eq!(r0.momentum2, r1.momentum2);
        assert_eq!(r0.divergence, r1.divergence);
        assert_eq!(r0.flux_eq, r1.flux_eq);
        assert_eq!(r0.slip_bc, r1.slip_bc);
        assert!(r0.stress_bc1 != r1.stress_bc1 || r0.stress_bc2 != r1.stress_bc2);
    }

    #[test]
    fn regularized_flux_is_one_minus_dxx_of_plain() {
        let (p, prof) = ebbing(0.1);
        let g = reconstruct(&prof, &p, &GridSpec { nx: 401, ny: 9, x_range: (-5.0, 5.0) }).unwrap();
        let f = residual_fields(&g, &GeometryOps::new(&g), &p).unwrap();
        let dd = fd::d2(&f.flux_plain, g.hx());
        let scale = f.flux.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for ix in 2..g.nx() - 2 {
            let via_plain = f.flux_plain[ix] - dd[ix];
            assert!((via_plain - f.flux[ix]).abs() < 1e-4 * scale, "{ix}: {via_plain} vs {}", f.flux[ix]);
        }
    }

    #[test]
    fn reflection_leaves_norms_unchanged() {
        let (p, prof) = ebbing(0.1);
        let g = reconstruct(&prof, &p, &GridSpec::active(&prof, 64, 9, 1e-8)).unwrap();
        let r = g.reflected();
        let a = evaluate_residuals(&g, &GeometryOps::new(&g), &p).unwrap();
        let b = evaluate_residuals(&r, &GeometryOps::new(&r), &p).unwrap();
        for ((k, x), (_, y)) in a.entries().iter().zip(b.entries().iter()) {
            assert!((x.l2 - y.l2).abs() <= 1e-10 && (x.sup - y.sup).abs() <= 1e-10, "{k}: {x:?} vs {y:?}");
        }
        assert!((a.divergence - b.divergence).abs() <= 1e-10);
    }

    #[test]
    fn residuals_shrink_with_eps() {
        let (_, prof) = ebbing(0.1);
        let spec = GridSpec::active(&prof, 2049, 9, 1e-8);
        let sweep = eps_sweep(&prof, &[0.2, 0.1, 0.05], &spec).unwrap();
        for r in &sweep.rows {
            assert!(r.report.is_finite());
            assert!(!r.report.refinement_flag, "{:?}", r.report.refinement_note);
        }
        for w in sweep.rows.windows(2) {
            assert!(w[1].report.momentum_l2() < w[0].report.momentum_l2());
            assert!(w[1].fitted_order.unwrap() >= 1.0);
        }
        assert!(sweep.fitted_order >= 1.0, "{}", sweep.fitted_order);
    }

    #[test]
    fn coarse_grid_is_flagged() {
        let (p, prof) = ebbing(0.1);
        let g = reconstruct(&prof, &p, &GridSpec::active(&prof, 13, 7, 1e-8)).unwrap();
        let rep = evaluate_residuals(&g, &GeometryOps::new(&g), &p).unwrap();
        assert!(rep.refinement_flag);
        assert!(rep.refinement_note.is_some());
    }
}
