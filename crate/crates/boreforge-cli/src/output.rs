//! File emission. Every file gets a `<name>.sidecar.json` next to it.

use std::path::PathBuf;

use boreforge::PhysParams;
use serde::Serialize;

use crate::config::{RunConfig, Sidecar};
use crate::error::CliError;

pub enum Cell {
    F(f64),
    Opt(Option<f64>),
    I(i64),
    S(String),
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::F(v) => num(*v),
            Cell::Opt(Some(v)) => num(*v),
            Cell::Opt(None) => String::new(),
            Cell::I(v) => v.to_string(),
            Cell::S(s) => s.clone(),
        }
    }
}

/// 17 significant digits.
pub fn num(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        format!("{v}")
    }
}

pub struct Emitter {
    dir: PathBuf,
    config: RunConfig,
    resolved: Option<PhysParams>,
    dimensional_flux: Option<f64>,
}

impl Emitter {
    pub fn new(config: &RunConfig, resolved: Option<PhysParams>, dimensional_flux: Option<f64>) -> Result<Self, CliError> {
        let dir = config.output_dir();
        std::fs::create_dir_all(&dir)
            .map_err(|e| CliError::Domain(format!("output directory {} not writable: {e}", dir.display())))?;
        Ok(Emitter { dir, config: config.clone(), resolved, dimensional_flux })
    }

    pub fn csv<I>(&self, name: &str, header: &[&str], rows: I) -> Result<(), CliError>
    where
        I: IntoIterator<Item = Vec<Cell>>,
    {
        let mut w = csv::Writer::from_path(self.dir.join(name))?;
        w.write_record(header)?;
        for row in rows {
            w.write_record(row.iter().map(Cell::render))?;
        }
        w.flush()?;
        self.sidecar(name)
    }

    pub fn json<T: Serialize>(&self, name: &str, value: &T) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        std::fs::write(self.dir.join(name), text)?;
        self.sidecar(name)
    }

    pub fn text(&self, name: &str, body: &str) -> Result<(), CliError> {
        std::fs::write(self.dir.join(name), body)?;
        self.sidecar(name)
    }

    fn sidecar(&self, name: &str) -> Result<(), CliError> {
        let s = Sidecar {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            file: name.to_string(),
            config: self.config.clone(),
            resolved: self.resolved,
            dimensional_flux: self.dimensional_flux,
        };
        let mut text = serde_json::to_string_pretty(&s)?;
        text.push('\n');
        std::fs::write(self.dir.join(format!("{name}.sidecar.json")), text)?;
        Ok(())
    }
}
