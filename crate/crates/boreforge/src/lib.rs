//! Traveling bore waves of the shallow free-boundary Navier-Stokes system.
//!
//! The leading-order bore is a heteroclinic orbit of a Liénard equation in the
//! log-height `ρ = log H`. This crate classifies parameters, shoots the orbit,
//! rebuilds the shallow-water and two-dimensional fields from it, measures how
//! well they satisfy the full flattened Navier-Stokes system, and perturbs the
//! orbit with nonautonomous forcing.

pub mod error;
pub mod field_reconstruct;
pub mod landscape;
pub mod ns_residual;
pub mod numerics;
pub mod orbit;
pub mod params;
pub mod perturbation_lab;
pub mod shallow_profile;

pub use error::{Error, Result};
pub use landscape::{classify, Classification, Landscape, Region};
pub use orbit::{shoot_heteroclinic, OrbitSolution, ShootOpts};
pub use params::{PhysParams, TunedConstants};
