use boreforge::field_reconstruct::{
    default_seeds, divergence_check, reconstruct, streamlines, vorticity, FieldGrid, Frame, GeometryOps, GridSpec,
};
use boreforge::landscape::region_boundary_curve;
use boreforge::ns_residual::{assemble_sweep, evaluate_residuals, sweep_point};
use boreforge::orbit::{energy_audit, linearize, EquilibriumAt};
use boreforge::params::froude;
use boreforge::perturbation_lab::{lipschitz_ratio, GaussianBump, LabOpts, PerturbationSetup, PerturbedOrbit};
use boreforge::shallow_profile::{build_profile, ShallowProfile};
use boreforge::{shoot_heteroclinic, Classification, Landscape, OrbitSolution, PhysParams, ShootOpts};
use rayon::prelude::*;
use serde_json::{json, Map, Value};

use crate::config::{resolve_g_flux, resolve_params, RunConfig, SweepKind};
use crate::error::CliError;
use crate::output::{Cell, Emitter};
use crate::svg::fields_svg;

fn excluded(g: f64, flux: f64, c: &Classification) -> CliError {
    CliError::Domain(format!(
        "(g, A) = ({g}, {flux}) is in the excluded region: bores need g < {} (ebbing) or g > {} (surging)",
        c.g_c1, c.g_cm1
    ))
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![lo],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

fn landscape_rows(l: &Landscape) -> Vec<Vec<Cell>> {
    let lo = l.eq.rho_minus.min(l.eq.rho_plus) - 1.0;
    let hi = l.rho_star.max(l.eq.rho_plus) + 1.0;
    linspace(lo, hi, 401)
        .into_iter()
        .map(|x| vec![Cell::F(x), Cell::F(l.f(x)), Cell::F(l.g(x)), Cell::F(l.v(x))])
        .collect()
}

struct Solved {
    params: PhysParams,
    phi: Option<f64>,
    orbit: OrbitSolution,
}

fn solve_orbit(cfg: &RunConfig) -> Result<Solved, CliError> {
    let (params, phi) = resolve_params(&cfg.params)?;
    let l = Landscape::new(&params)?;
    if l.region().iota().is_none() {
        return Err(excluded(params.g(), params.flux(), &l.classification));
    }
    let orbit = shoot_heteroclinic(&l, &ShootOpts::default())?;
    Ok(Solved { params, phi, orbit })
}

fn grid_spec(cfg: &RunConfig, prof: &ShallowProfile) -> GridSpec {
    let g = &cfg.grid;
    GridSpec::active(prof, g.nx.unwrap_or(400), g.ny.unwrap_or(16), g.tol.unwrap_or(1e-6))
}

pub fn classify(cfg: &RunConfig) -> Result<(), CliError> {
    let (g, flux) = resolve_g_flux(&cfg.params)?;
    let c = boreforge::classify(g, flux)?;
    let resolved = resolve_params(&cfg.params).ok();
    let em = Emitter::new(cfg, resolved.map(|r| r.0), resolved.and_then(|r| r.1))?;
    em.json(
        "classify.json",
        &json!({
            "g": g,
            "A": flux,
            "region": c.region.short(),
            "label": c.region.label(),
            "iota": c.region.iota(),
            "g_c1": c.g_c1,
            "g_cm1": c.g_cm1,
            "froude": froude(g),
        }),
    )?;
    let samples: Vec<f64> = (1..200).map(|i| i as f64 / 200.0).collect();
    let curve = region_boundary_curve(&samples)?;
    em.csv(
        "boundary.csv",
        &["A", "g_lower", "g_upper"],
        curve.iter().map(|r| vec![Cell::F(r.flux), Cell::F(r.g_lower), Cell::F(r.g_upper)]),
    )?;
    if let Some((p, _)) = resolved {
        em.csv("landscape.csv", &["x", "F", "G", "V"], landscape_rows(&Landscape::new(&p)?))?;
    }
    println!("{}", c.region.label());
    match c.region.iota() {
        Some(_) => Ok(()),
        None => Err(excluded(g, flux, &c)),
    }
}

pub fn orbit(cfg: &RunConfig) -> Result<(), CliError> {
    let s = solve_orbit(cfg)?;
    let o = &s.orbit;
    let em = Emitter::new(cfg, Some(s.params), s.phi)?;
    let flux = s.params.flux();
    em.csv(
        "orbit.csv",
        &["t", "rho", "rho_prime", "H", "U"],
        o.samples.iter().map(|p| {
            let h = p.rho.exp();
            vec![Cell::F(p.t), Cell::F(p.rho), Cell::F(p.rho_prime), Cell::F(h), Cell::F(4.0 - flux / h)]
        }),
    )?;
    let l = &o.landscape;
    em.json(
        "orbit.json",
        &json!({
            "region": o.region().short(),
            "chirality": o.chirality,
            "rho_limits": [o.rho_limits.0, o.rho_limits.1],
            "t_range": [o.t_range().0, o.t_range().1],
            "samples": o.samples.len(),
            "anchor": o.anchor,
            "decay_rate": o.decay_rate,
            "tail_fits": [o.tail_fits.0, o.tail_fits.1],
            "trap_violation": o.trap_violation,
            "endpoint_error": [o.endpoint_error.0, o.endpoint_error.1],
            "seed_offset": o.seed_offset,
            "energy": energy_audit(o),
            "spectrum_minus": linearize(EquilibriumAt::RhoMinus, l)?,
            "spectrum_plus": linearize(EquilibriumAt::RhoPlus, l)?,
        }),
    )?;
    em.csv("landscape.csv", &["x", "F", "G", "V"], landscape_rows(l))?;
    println!(
        "{}: rho {:.6} -> {:.6}, {} samples, endpoint error {:.2e}",
        o.region().label(),
        o.rho_limits.0,
        o.rho_limits.1,
        o.samples.len(),
        o.endpoint_error.0.max(o.endpoint_error.1)
    );
    Ok(())
}

pub fn profile(cfg: &RunConfig) -> Result<(), CliError> {
    let s = solve_orbit(cfg)?;
    let prof = build_profile(&s.orbit, &s.params)?;
    let em = Emitter::new(cfg, Some(s.params), s.phi)?;
    let (x0, x1) = prof.x_range();
    let n = cfg.grid.points.unwrap_or(2001);
    em.csv(
        "profile.csv",
        &["x", "H", "U", "U1", "U2", "P", "P1", "P2"],
        linspace(x0, x1, n).into_iter().map(|x| prof.at(x).row().into_iter().map(Cell::F).collect()),
    )?;
    let report = prof.verify_lienard_equivalence()?;
    let (left, right) = prof.limits();
    em.json(
        "profile.json",
        &json!({
            "x_range": [x0, x1],
            "lienard": report,
            "limit_left": left,
            "limit_right": right,
        }),
    )?;
    println!(
        "profile on [{x0:.3}, {x1:.3}]: mass {:.2e}, momentum {:.2e}, H-form {:.2e}",
        report.mass, report.momentum, report.h_form
    );
    Ok(())
}

fn nested(grid: &FieldGrid, v: &[f64]) -> Vec<Vec<f64>> {
    (0..grid.nx()).map(|ix| (0..grid.ny()).map(|iy| v[grid.idx(ix, iy)]).collect()).collect()
}

pub fn fields(cfg: &RunConfig) -> Result<(), CliError> {
    let s = solve_orbit(cfg)?;
    let prof = build_profile(&s.orbit, &s.params)?;
    let grid = reconstruct(&prof, &s.params, &grid_spec(cfg, &prof))?;
    let geom = GeometryOps::new(&grid);
    let omega = vorticity(&grid, &geom);
    let lines = streamlines(&prof, &grid.in_frame(Frame::Traveling), &default_seeds(cfg.grid.seeds.unwrap_or(12)))?;
    let em = Emitter::new(cfg, Some(s.params), s.phi)?;
    em.json(
        "fields.json",
        &json!({
            "eps": grid.eps,
            "frame_speed": grid.frame_speed,
            "divergence": divergence_check(&grid, &geom),
            "x_nodes": grid.x_nodes,
            "y_nodes": (0..grid.ny()).map(|iy| grid.y(iy)).collect::<Vec<_>>(),
            "zeta": grid.zeta,
            "u1": nested(&grid, &grid.u1()),
            "u2": nested(&grid, &grid.u2),
            "p": nested(&grid, &grid.p),
            "omega": nested(&grid, &omega),
            "streamline_warnings": lines.warnings,
        }),
    )?;
    em.csv(
        "streamlines.csv",
        &["line", "seed_yhat", "x", "y", "height"],
        lines.lines.iter().enumerate().flat_map(|(k, l)| {
            l.points.iter().map(move |p| {
                vec![Cell::I(k as i64), Cell::F(l.seed_yhat), Cell::F(p[0]), Cell::F(p[1]), Cell::F(p[2])]
            })
        }),
    )?;
    if cfg.svg {
        em.text("fields.svg", &fields_svg(&grid, &omega, &lines))?;
    }
    for w in &lines.warnings {
        eprintln!("warning: {w}");
    }
    println!("fields on {} x {} nodes, {} streamlines", grid.nx(), grid.ny(), lines.lines.len());
    Ok(())
}

pub fn residual(cfg: &RunConfig) -> Result<(), CliError> {
    let s = solve_orbit(cfg)?;
    let prof = build_profile(&s.orbit, &s.params)?;
    let grid = reconstruct(&prof, &s.params, &grid_spec(cfg, &prof))?;
    let rep = evaluate_residuals(&grid, &GeometryOps::new(&grid), &s.params)?;
    let relative: Map<String, Value> = rep.relative().into_iter().map(|(k, v)| (k.to_string(), json!(v))).collect();
    let em = Emitter::new(cfg, Some(s.params), s.phi)?;
    em.json("residual.json", &json!({ "report": rep, "relative": relative }))?;
    if let Some(note) = &rep.refinement_note {
        eprintln!("warning: {note}");
    }
    println!(
        "momentum L2 {:.3e} {:.3e}, divergence {:.2e}, slip {:.2e}",
        rep.momentum1.l2, rep.momentum2.l2, rep.divergence, rep.slip_bc.sup
    );
    Ok(())
}

pub fn sweep(cfg: &RunConfig) -> Result<(), CliError> {
    match cfg.sweep.kind {
        SweepKind::Region => region_sweep(cfg),
        SweepKind::Eps => eps_sweep(cfg),
    }
}

fn region_sweep(cfg: &RunConfig) -> Result<(), CliError> {
    let sw = &cfg.sweep;
    let gs = linspace(sw.g_min, sw.g_max, sw.g_steps);
    let fs = linspace(sw.a_min, sw.a_max, sw.a_steps);
    let points: Vec<(f64, f64)> = fs.iter().flat_map(|&a| gs.iter().map(move |&g| (g, a))).collect();
    let results: Vec<_> = points.par_iter().map(|&(g, a)| boreforge::classify(g, a)).collect();
    let em = Emitter::new(cfg, None, None)?;
    let mut counts = [0usize; 4];
    let rows: Vec<Vec<Cell>> = points
        .iter()
        .zip(&results)
        .map(|(&(g, a), r)| match r {
            Ok(c) => {
                counts[match c.region.iota() {
                    Some(1) => 0,
                    Some(_) => 1,
                    None => 2,
                }] += 1;
                vec![
                    Cell::F(g),
                    Cell::F(a),
                    Cell::S(c.region.short().into()),
                    Cell::F(c.g_c1),
                    Cell::F(c.g_cm1),
                    Cell::S("ok".into()),
                ]
            }
            Err(e) => {
                counts[3] += 1;
                vec![
                    Cell::F(g),
                    Cell::F(a),
                    Cell::S(String::new()),
                    Cell::Opt(None),
                    Cell::Opt(None),
                    Cell::S(format!("error: {e}")),
                ]
            }
        })
        .collect();
    em.csv("sweep_region.csv", &["g", "A", "region", "g_lower", "g_upper", "status"], rows)?;
    em.json(
        "sweep.json",
        &json!({
            "kind": "region",
            "points": points.len(),
            "C1": counts[0],
            "Cminus1": counts[1],
            "Excluded": counts[2],
            "failures": counts[3],
        }),
    )?;
    println!(
        "{} points: {} C1, {} Cminus1, {} Excluded, {} failed",
        points.len(),
        counts[0],
        counts[1],
        counts[2],
        counts[3]
    );
    Ok(())
}

fn eps_sweep(cfg: &RunConfig) -> Result<(), CliError> {
    let s = solve_orbit(cfg)?;
    let prof = build_profile(&s.orbit, &s.params)?;
    let spec = grid_spec(cfg, &prof);
    let eps = &cfg.sweep.eps;
    let results: Vec<_> = eps.par_iter().map(|&e| sweep_point(&prof, e, &spec)).collect();
    let ok: Vec<_> = results.iter().filter_map(|r| r.as_ref().ok().cloned()).collect();
    let assembled = assemble_sweep(ok);
    let mut next = assembled.rows.iter();
    let mut flags = Vec::new();
    let rows: Vec<Vec<Cell>> = eps
        .iter()
        .zip(&results)
        .map(|(&e, r)| match r {
            Ok(_) => {
                let row = next.next().expect("one assembled row per success");
                flags.push(json!({ "eps": e, "refinement_flag": row.report.refinement_flag }));
                vec![
                    Cell::F(e),
                    Cell::F(row.momentum1_l2),
                    Cell::F(row.momentum2_l2),
                    Cell::F(row.stress1),
                    Cell::F(row.stress2),
                    Cell::F(row.slip),
                    Cell::F(row.flux),
                    Cell::Opt(row.fitted_order),
                    Cell::S("ok".into()),
                ]
            }
            Err(err) => {
                let mut v: Vec<Cell> = vec![Cell::F(e)];
                v.extend((0..7).map(|_| Cell::Opt(None)));
                v.push(Cell::S(format!("error: {err}")));
                v
            }
        })
        .collect();
    let failures = results.iter().filter(|r| r.is_err()).count();
    let em = Emitter::new(cfg, Some(s.params), s.phi)?;
    em.csv(
        "sweep_eps.csv",
        &["eps", "momentum1_L2", "momentum2_L2", "stress1", "stress2", "slip", "flux", "fitted_order", "status"],
        rows,
    )?;
    let fitted = assembled.fitted_order;
    em.json(
        "sweep.json",
        &json!({
            "kind": "eps",
            "points": eps.len(),
            "failures": failures,
            "fitted_order": if fitted.is_finite() { Some(fitted) } else { None },
            "rows": flags,
        }),
    )?;
    println!("{} values of eps, {} failed, fitted order {:.3}", eps.len(), failures, fitted);
    Ok(())
}

fn orbit_rows(o: &PerturbedOrbit, window: (f64, f64), max_rows: usize) -> Vec<Vec<Cell>> {
    let idx: Vec<usize> = (0..o.t.len()).filter(|&i| o.t[i] >= window.0 && o.t[i] <= window.1).collect();
    let stride = idx.len().div_ceil(max_rows.max(1)).max(1);
    idx.iter()
        .step_by(stride)
        .map(|&i| {
            let (b, z, x) = (o.base[i], o.correction[i], o.state(i));
            vec![
                Cell::F(o.t[i]),
                Cell::F(b[0]),
                Cell::F(b[1]),
                Cell::F(z[0]),
                Cell::F(z[1]),
                Cell::F(x[0]),
                Cell::F(x[1]),
            ]
        })
        .collect()
}

pub fn perturb(cfg: &RunConfig) -> Result<(), CliError> {
    let s = solve_orbit(cfg)?;
    let pc = &cfg.perturb;
    if !(pc.width > 0.0) || !pc.t0.is_finite() {
        return Err(CliError::Domain(format!("perturbation width must be positive, got {}", pc.width)));
    }
    let setup = PerturbationSetup::new(&s.orbit, &LabOpts::default())?;
    let bump = GaussianBump { t0: pc.t0, width: pc.width };
    let results: Vec<_> = pc.lambdas.par_iter().map(|&lam| setup.solve(&bump, lam)).collect();
    let em = Emitter::new(cfg, Some(s.params), s.phi)?;
    let (t0, t1) = s.orbit.t_range();
    let window = (t0.min(pc.t0 - 4.0 * pc.width), t1.max(pc.t0 + 4.0 * pc.width));
    let header = ["t", "rho_base", "rho_prime_base", "b1", "b2", "rho", "rho_prime"];
    let mut entries = Vec::new();
    let mut solved = Vec::new();
    let mut first_err = None;
    for (k, (&lam, r)) in pc.lambdas.iter().zip(results).enumerate() {
        match r {
            Ok(o) => {
                let file = format!("perturb_{k:03}.csv");
                em.csv(&file, &header, orbit_rows(&o, window, pc.max_rows))?;
                entries.push(json!({
                    "lambda": lam,
                    "status": "ok",
                    "file": file,
                    "iteration_count": o.iteration_count,
                    "contraction_ratio": o.contraction_ratio,
                    "gluing_mismatch": o.gluing_mismatch,
                    "max_correction": o.max_correction(),
                    "left_limit": o.left_limit,
                    "right_limit": o.right_limit,
                }));
                solved.push(o);
            }
            Err(e) => {
                entries.push(json!({ "lambda": lam, "status": format!("error: {e}") }));
                first_err.get_or_insert(e);
            }
        }
    }
    let lipschitz = lipschitz_ratio(&solved);
    em.json(
        "perturb.json",
        &json!({
            "t0": pc.t0,
            "width": pc.width,
            "switch_time": setup.switch_time,
            "hyperbolic": setup.hyperbolic,
            "lipschitz": lipschitz,
            "orbits": entries,
        }),
    )?;
    match lipschitz {
        Some(l) => println!("{} orbits, Lipschitz ratio {l:.6e}", solved.len()),
        None => println!("{} orbits", solved.len()),
    }
    match first_err {
        Some(e) => Err(e.into()),
        None => Ok(()),
    }
}
