mod commands;
mod config;
mod error;
mod output;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{CommandKind, RunConfig, SweepKind};
use error::CliError;

#[derive(Parser)]
#[command(name = "boreforge", version, about = "Traveling bores of the shallow free-boundary Navier-Stokes system")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Region of (g, A); also writes the region boundary.
    Classify(Flags),
    /// Heteroclinic orbit of the Liénard system.
    Orbit(Flags),
    /// Shallow-water profile H, U, P and its derivatives.
    Profile(Flags),
    /// Two-dimensional fields, vorticity and streamlines.
    Fields(Flags),
    /// Residuals of the reconstructed fields in the full system.
    Residual(Flags),
    /// Region map over a (g, A) grid, or residuals over a list of ε.
    Sweep(Flags),
    /// Orbits under a Gaussian forcing λ·exp(−((t − t0)/width)²) e₂.
    Perturb(Flags),
}

#[derive(Args, Clone, Default)]
struct Flags {
    /// JSON run configuration (a sidecar file works too); flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,

    #[arg(long)]
    mu: Option<f64>,
    #[arg(long)]
    a: Option<f64>,
    #[arg(long)]
    g: Option<f64>,
    /// Relative velocity flux.
    #[arg(long = "A")]
    flux: Option<f64>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    eps: Option<f64>,

    #[arg(long)]
    nx: Option<usize>,
    #[arg(long)]
    ny: Option<usize>,
    /// Grid window: keep x where ρ is farther than this from its limits.
    #[arg(long)]
    tol: Option<f64>,
    /// Number of streamline seeds.
    #[arg(long)]
    seeds: Option<usize>,
    /// Rows of profile.csv.
    #[arg(long)]
    points: Option<usize>,
    /// Also write fields.svg.
    #[arg(long)]
    svg: bool,

    #[arg(long, value_enum)]
    kind: Option<SweepKind>,
    #[arg(long, allow_hyphen_values = true)]
    g_min: Option<f64>,
    #[arg(long)]
    g_max: Option<f64>,
    #[arg(long)]
    g_steps: Option<usize>,
    #[arg(long = "A-min")]
    a_min: Option<f64>,
    #[arg(long = "A-max")]
    a_max: Option<f64>,
    #[arg(long = "A-steps")]
    a_steps: Option<usize>,
    /// Comma-separated list of ε for the residual sweep.
    #[arg(long = "eps-list", value_delimiter = ',')]
    eps_list: Option<Vec<f64>>,

    #[arg(long, allow_hyphen_values = true)]
    t0: Option<f64>,
    #[arg(long)]
    width: Option<f64>,
    /// Comma-separated amplitudes λ.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    lambdas: Option<Vec<f64>>,
}

impl Flags {
    fn merge(self) -> Result<RunConfig, CliError> {
        let mut c = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        fn set<T>(slot: &mut T, v: Option<T>) {
            if let Some(v) = v {
                *slot = v;
            }
        }
        if self.out.is_some() {
            c.output_dir = self.out;
        }
        let p = &mut c.params;
        for (slot, v) in [
            (&mut p.mu, self.mu),
            (&mut p.a, self.a),
            (&mut p.g, self.g),
            (&mut p.flux, self.flux),
            (&mut p.sigma, self.sigma),
            (&mut p.eps, self.eps),
        ] {
            if v.is_some() {
                *slot = v;
            }
        }
        let gr = &mut c.grid;
        if self.nx.is_some() {
            gr.nx = self.nx;
        }
        if self.ny.is_some() {
            gr.ny = self.ny;
        }
        if self.tol.is_some() {
            gr.tol = self.tol;
        }
        if self.seeds.is_some() {
            gr.seeds = self.seeds;
        }
        if self.points.is_some() {
            gr.points = self.points;
        }
        c.svg |= self.svg;
        let s = &mut c.sweep;
        set(&mut s.kind, self.kind);
        set(&mut s.g_min, self.g_min);
        set(&mut s.g_max, self.g_max);
        set(&mut s.g_steps, self.g_steps);
        set(&mut s.a_min, self.a_min);
        set(&mut s.a_max, self.a_max);
        set(&mut s.a_steps, self.a_steps);
        set(&mut s.eps, self.eps_list);
        let pt = &mut c.perturb;
        set(&mut pt.t0, self.t0);
        set(&mut pt.width, self.width);
        set(&mut pt.lambdas, self.lambdas);
        Ok(c)
    }
}

fn init_threads() {
    if let Some(n) = std::env::var("BOREFORGE_THREADS").ok().and_then(|v| v.trim().parse::<usize>().ok()) {
        if n >= 1 {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let (kind, flags) = match cli.command {
        Cmd::Classify(f) => (CommandKind::Classify, f),
        Cmd::Orbit(f) => (CommandKind::Orbit, f),
        Cmd::Profile(f) => (CommandKind::Profile, f),
        Cmd::Fields(f) => (CommandKind::Fields, f),
        Cmd::Residual(f) => (CommandKind::Residual, f),
        Cmd::Sweep(f) => (CommandKind::Sweep, f),
        Cmd::Perturb(f) => (CommandKind::Perturb, f),
    };
    let mut config = flags.merge()?;
    config.resolve_defaults(kind);
    match kind {
        CommandKind::Classify => commands::classify(&config),
        CommandKind::Orbit => commands::orbit(&config),
        CommandKind::Profile => commands::profile(&config),
        CommandKind::Fields => commands::fields(&config),
        CommandKind::Residual => commands::residual(&config),
        CommandKind::Sweep => commands::sweep(&config),
        CommandKind::Perturb => commands::perturb(&config),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_threads();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
