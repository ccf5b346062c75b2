//! `rotorspin`: spectra, feedforward waveforms, pulse protocols and figure
//! reproduction for the NV–¹⁴N nuclear spin in a rotating diamond.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use crate::config::RunConfig;
use crate::output::Sink;

#[derive(Debug, Parser)]
#[command(name = "rotorspin", version, about = "NV-14N nuclear spin simulator for a rotating diamond")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,

    /// JSON run configuration; missing keys take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory, or a `.csv` path naming the primary output.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Number of sweep points (rows for spectral output).
    #[arg(long, global = true)]
    points: Option<usize>,

    #[arg(long, global = true)]
    shots: Option<usize>,

    /// Also write SVG line plots.
    #[arg(long, global = true)]
    svg: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Adiabatic energies, η↔ζ frequency and α′ over one rotation.
    Spectrum,
    /// Bare-state weights of the η and ζ states over one rotation.
    Projections,
    /// Phase-continuous feedforward waveform.
    Feedforward {
        #[arg(long)]
        periods: Option<usize>,
    },
    Rabi,
    Ramsey,
    Echo,
    /// Echo spanning an even number of rotation periods.
    EchoMultiperiod,
    Spinlock,
    /// Full nine-level checks of the reduced model and of adiabatic following.
    Validate,
    /// Regenerate the data behind a figure.
    Reproduce { figure: Figure },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Spectrum => "spectrum",
            Command::Projections => "projections",
            Command::Feedforward { .. } => "feedforward",
            Command::Rabi => "rabi",
            Command::Ramsey => "ramsey",
            Command::Echo => "echo",
            Command::EchoMultiperiod => "echo-multiperiod",
            Command::Spinlock => "spinlock",
            Command::Validate => "validate",
            Command::Reproduce { .. } => "reproduce",
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Figure {
    Fig3a,
    Fig3c,
    Fig4c,
    Fig5,
    Fig6,
}

impl Figure {
    fn name(&self) -> &'static str {
        match self {
            Figure::Fig3a => "fig3a",
            Figure::Fig3c => "fig3c",
            Figure::Fig4c => "fig4c",
            Figure::Fig5 => "fig5",
            Figure::Fig6 => "fig6",
        }
    }
}

#[derive(Debug)]
pub enum CliError {
    Core(rotorspin_core::Error),
    Config(String),
    Io(PathBuf, std::io::Error),
    Check { module: &'static str, what: String },
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Core(e) => e.fmt(f),
            CliError::Config(m) => f.write_str(m),
            CliError::Io(p, e) => write!(f, "{}: {e}", p.display()),
            CliError::Check { what, .. } => f.write_str(what),
        }
    }
}

impl From<rotorspin_core::Error> for CliError {
    fn from(e: rotorspin_core::Error) -> Self {
        CliError::Core(e)
    }
}

impl CliError {
    fn module(&self) -> &'static str {
        match self {
            CliError::Core(e) => e.module(),
            CliError::Config(_) => "config",
            CliError::Io(..) => "cli",
            CliError::Check { module, .. } => module,
        }
    }
}

/// Applies ROTORSPIN_THREADS to the global worker pool.
fn configure_threads() -> Result<(), String> {
    let Ok(value) = std::env::var("ROTORSPIN_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| format!("ROTORSPIN_THREADS must be a positive integer, got {value:?}"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| e.to_string())
}

fn run(cli: &Cli) -> Result<Vec<PathBuf>, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(shots) = cli.shots {
        cfg.shots = shots;
    }
    cfg.validate()?;
    if cli.points == Some(0) {
        return Err(CliError::Config("invalid `points`: must be at least 1".into()));
    }
    let sink = Sink::new(cli.out.as_deref(), cfg.output_dir.as_deref(), cli.svg);
    let mut ctx = commands::Ctx::new(cfg, cli.points, sink);
    commands::run(&mut ctx, &cli.command)?;
    Ok(ctx.sink.written)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = configure_threads() {
        eprintln!("rotorspin: error [cli]: {e}");
        return ExitCode::from(2);
    }
    match run(&cli) {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("rotorspin: error [{}]: {e}", e.module());
            ExitCode::from(1)
        }
    }
}
