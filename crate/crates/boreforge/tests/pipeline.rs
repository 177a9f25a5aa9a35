use boreforge::field_reconstruct::{default_seeds, reconstruct, streamlines, Frame, GeometryOps, GridSpec};
use boreforge::ns_residual::evaluate_residuals;
use boreforge::perturbation_lab::{perturbed_bore, GaussianBump, LabOpts};
use boreforge::shallow_profile::build_profile;
use boreforge::{classify, shoot_heteroclinic, Landscape, PhysParams, Region, ShootOpts};
use proptest::prelude::*;

fn run(mu: f64, a: f64, g: f64, flux: f64, eps: f64) -> (PhysParams, i8, serde_json::Value) {
    let p = PhysParams::new(mu, a, g, flux, 0.0, eps).unwrap();
    let l = Landscape::new(&p).unwrap();
    let o = shoot_heteroclinic(&l, &ShootOpts::default()).unwrap();
    let prof = build_profile(&o, &p).unwrap();
    let grid = reconstruct(&prof, &p, &GridSpec::active(&prof, 200, 12, 1e-6)).unwrap();
    let rep = evaluate_residuals(&grid, &GeometryOps::new(&grid), &p).unwrap();
    assert!(rep.is_finite());
    let lines = streamlines(&prof, &grid.in_frame(Frame::Traveling), &default_seeds(5)).unwrap();
    assert_eq!(lines.lines.len(), 5);
    assert!(lines.warnings.is_empty());
    (p, o.chirality, serde_json::to_value(&rep).unwrap())
}

#[test]
fn ebbing_end_to_end() {
    let (p, chirality, json) = run(2.0, 1.0, 0.125, 0.75, 0.1);
    assert_eq!(chirality, 1);
    assert_eq!(classify(p.g(), p.flux()).unwrap().region, Region::C1);
    assert!(json["momentum1"]["sup"].as_f64().unwrap() > 0.0);
}

#[test]
fn surging_end_to_end() {
    let (_, chirality, json) = run(2.0, 1.0, 25.0, 0.855, 0.1);
    assert_eq!(chirality, -1);
    assert!(json["slip_bc"]["sup"].as_f64().unwrap() < 1e-10);
}

#[test]
fn excluded_point_is_domain_error() {
    let p = PhysParams::new(1.0, 1.0, 8.0, 0.5, 0.0, 0.1).unwrap();
    let l = Landscape::new(&p).unwrap();
    assert!(shoot_heteroclinic(&l, &ShootOpts::default()).unwrap_err().is_domain());
}

#[test]
fn perturbed_family_serializes() {
    let p = PhysParams::new(2.0, 1.0, 0.125, 0.75, 0.0, 0.1).unwrap();
    let o = shoot_heteroclinic(&Landscape::new(&p).unwrap(), &ShootOpts::default()).unwrap();
    let fam = perturbed_bore(&o, &GaussianBump { t0: 0.0, width: 1.0 }, &[0.0, 1e-4, 2e-4], &LabOpts::default()).unwrap();
    let lip = fam.lipschitz.unwrap();
    assert!(lip.is_finite() && lip > 0.0);
    let v = serde_json::to_value(&fam).unwrap();
    assert_eq!(v["orbits"].as_array().unwrap().len(), 3);
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 6, ..ProptestConfig::default() })]
    #[test]
    fn residuals_finite_on_random_c1_points(mu in 0.5f64..3.0, a in 0.5f64..3.0, flux in 0.3f64..0.9, s in 0.05f64..0.9) {
        let g = classify(0.0, flux).unwrap().g_c1 * s;
        let (_, chirality, _) = run(mu, a, g, flux, 0.1);
        prop_assert_eq!(chirality, 1);
    }
}
