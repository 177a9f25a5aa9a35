//! Run configuration: JSON file merged with command-line flags.

use std::path::{Path, PathBuf};

use boreforge::params::{dimensionalize, DimensionalParams};
use boreforge::PhysParams;
use clap::ValueEnum;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CommandKind {
    Classify,
    Orbit,
    Profile,
    Fields,
    Residual,
    Sweep,
    Perturb,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum SweepKind {
    #[default]
    Region,
    Eps,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ParamInput {
    pub mu: Option<f64>,
    pub a: Option<f64>,
    pub g: Option<f64>,
    #[serde(rename = "A")]
    pub flux: Option<f64>,
    pub sigma: Option<f64>,
    pub eps: Option<f64>,
    /// Dimensional inputs; A and eps are still taken from above.
    pub dimensional: Option<DimensionalParams>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridOpts {
    pub nx: Option<usize>,
    pub ny: Option<usize>,
    /// Window: where ρ is farther than this from its limits.
    pub tol: Option<f64>,
    pub seeds: Option<usize>,
    /// Rows of profile.csv.
    pub points: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepOpts {
    pub kind: SweepKind,
    pub g_min: f64,
    pub g_max: f64,
    pub g_steps: usize,
    #[serde(rename = "A_min")]
    pub a_min: f64,
    #[serde(rename = "A_max")]
    pub a_max: f64,
    #[serde(rename = "A_steps")]
    pub a_steps: usize,
    pub eps: Vec<f64>,
}

impl Default for SweepOpts {
    fn default() -> Self {
        SweepOpts {
            kind: SweepKind::Region,
            g_min: 0.0,
            g_max: 40.0,
            g_steps: 200,
            a_min: 0.005,
            a_max: 0.995,
            a_steps: 200,
            eps: vec![0.2, 0.1, 0.05],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PerturbOpts {
    pub t0: f64,
    pub width: f64,
    pub lambdas: Vec<f64>,
    /// Cap on rows per orbit CSV.
    pub max_rows: usize,
}

impl Default for PerturbOpts {
    fn default() -> Self {
        PerturbOpts { t0: 0.0, width: 1.0, lambdas: vec![0.0, 1e-4, 2e-4], max_rows: 4000 }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub command: Option<CommandKind>,
    pub params: ParamInput,
    pub output_dir: Option<PathBuf>,
    pub grid: GridOpts,
    pub sweep: SweepOpts,
    pub perturb: PerturbOpts,
    pub svg: bool,
}

/// Shape of the sidecar written next to every output file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Sidecar {
    pub tool: String,
    pub version: String,
    pub file: String,
    pub config: RunConfig,
    pub resolved: Option<PhysParams>,
    /// Dimensional relative velocity flux, when dimensional inputs were given.
    pub dimensional_flux: Option<f64>,
}

impl RunConfig {
    /// Read a config file; a sidecar is accepted as well.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Domain(format!("cannot read config {}: {e}", path.display())))?;
        let value: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| CliError::Domain(format!("config {}: {e}", path.display())))?;
        let value = match value.get("config") {
            Some(inner) if value.get("tool").is_some() => inner.clone(),
            _ => value,
        };
        serde_json::from_value(value).map_err(|e| CliError::Domain(format!("config {}: {e}", path.display())))
    }

    /// Fill every default that the command depends on, so the sidecar
    /// records exactly what ran.
    pub fn resolve_defaults(&mut self, command: CommandKind) {
        self.command = Some(command);
        if self.output_dir.is_none() {
            self.output_dir = Some(PathBuf::from("boreforge-out"));
        }
        let p = &mut self.params;
        if p.dimensional.is_none() && p.sigma.is_none() {
            p.sigma = Some(0.0);
        }
        p.eps.get_or_insert(0.1);
        let fine = matches!(command, CommandKind::Residual | CommandKind::Sweep);
        let g = &mut self.grid;
        g.nx.get_or_insert(if fine { 2049 } else { 400 });
        g.ny.get_or_insert(if fine { 9 } else { 16 });
        g.tol.get_or_insert(if fine { 1e-8 } else { 1e-6 });
        g.seeds.get_or_insert(12);
        g.points.get_or_insert(2001);
    }

    pub fn output_dir(&self) -> PathBuf {
        self.output_dir.clone().unwrap_or_else(|| PathBuf::from("boreforge-out"))
    }
}

fn need(v: Option<f64>, name: &str) -> Result<f64, CliError> {
    v.ok_or_else(|| CliError::Domain(format!("missing parameter {name} (flag --{name} or config key \"{name}\")")))
}

/// Nondimensional parameters, plus the dimensional flux when dimensional
/// inputs were given.
pub fn resolve_params(p: &ParamInput) -> Result<(PhysParams, Option<f64>), CliError> {
    let flux = need(p.flux, "A")?;
    let eps = need(p.eps, "eps")?;
    match &p.dimensional {
        Some(d) => {
            if p.mu.is_some() || p.a.is_some() || p.g.is_some() || p.sigma.is_some() {
                return Err(CliError::Domain(
                    "give either dimensional inputs or mu, a, g, sigma, not both".into(),
                ));
            }
            let (pp, phi) = dimensionalize(d, flux, eps)?;
            Ok((pp, Some(phi)))
        }
        None => {
            let pp = PhysParams::new(
                need(p.mu, "mu")?,
                need(p.a, "a")?,
                need(p.g, "g")?,
                flux,
                need(p.sigma, "sigma")?,
                eps,
            )?;
            Ok((pp, None))
        }
    }
}

/// (g, A) alone, which is all classification needs.
pub fn resolve_g_flux(p: &ParamInput) -> Result<(f64, f64), CliError> {
    if p.dimensional.is_some() {
        let (pp, _) = resolve_params(p)?;
        return Ok((pp.g(), pp.flux()));
    }
    Ok((need(p.g, "g")?, need(p.flux, "A")?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_depend_on_command() {
        let mut c = RunConfig::default();
        c.resolve_defaults(CommandKind::Residual);
        assert_eq!((c.grid.nx, c.grid.ny, c.grid.tol), (Some(2049), Some(9), Some(1e-8)));
        let mut c = RunConfig::default();
        c.resolve_defaults(CommandKind::Fields);
        assert_eq!((c.grid.nx, c.grid.ny), (Some(400), Some(16)));
        assert_eq!(c.params.sigma, Some(0.0));
    }

    #[test]
    fn resolved_config_round_trips() {
        let mut c = RunConfig::default();
        c.params.flux = Some(0.75);
        c.resolve_defaults(CommandKind::Sweep);
        let back: RunConfig = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn mixed_parameter_styles_rejected() {
        let p = ParamInput {
            mu: Some(1.0),
            flux: Some(0.5),
            eps: Some(0.1),
            dimensional: Some(DimensionalParams { mu_d: 1.0, kappa: 1.0, a_d: 1.0, g_d: 0.1, sigma_d: 0.0, gamma: 4.0 }),
            ..ParamInput::default()
        };
        assert!(matches!(resolve_params(&p), Err(CliError::Domain(_))));
    }
}
