mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use tvtomo_core::Error;

use crate::config::Method;

/// TV-regularized X-ray tomography with resolution-based parameter choice.
#[derive(Parser, Debug)]
#[command(name = "tvtomo", version)]
pub struct Cli {
    /// Flat `section.key=value` configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Run directory. Defaults to `$TVTOMO_OUT/<command>`, else
    /// `tvtomo-out/<command>`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Override one configuration key; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Render a synthetic phantom.
    Phantom(PhantomArgs),
    /// Simulate a noise-free sinogram from a phantom or an image.
    Project(ProjectArgs),
    /// Add seeded Gaussian noise to a sinogram.
    Noise(NoiseArgs),
    /// Reconstruct at one alpha and resolution.
    Reconstruct(ReconstructArgs),
    /// Reconstruct over a grid of alphas and resolutions.
    Sweep(SweepArgs),
    /// Choose alpha from a sweep table.
    Select(SelectArgs),
    /// Tabulate a sweep with the stable rows marked, plus PGM images.
    Report(ReportArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Phantom(_) => "phantom",
            Command::Project(_) => "project",
            Command::Noise(_) => "noise",
            Command::Reconstruct(_) => "reconstruct",
            Command::Sweep(_) => "sweep",
            Command::Select(_) => "select",
            Command::Report(_) => "report",
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum ShapeKind {
    Disc,
    Shells,
    Polygon,
}

#[derive(Args, Debug)]
pub struct PhantomArgs {
    /// Single shape given by flags. Use `--file` for compound phantoms.
    #[arg(long, value_enum, conflicts_with = "file", required_unless_present = "file")]
    pub kind: Option<ShapeKind>,
    /// Phantom description file.
    #[arg(long)]
    pub file: Option<PathBuf>,
    #[arg(long, default_value_t = 0.5)]
    pub cx: f64,
    #[arg(long, default_value_t = 0.5)]
    pub cy: f64,
    #[arg(long)]
    pub r: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    pub value: f64,
    /// Shell radii, outermost first.
    #[arg(long, value_delimiter = ',')]
    pub radii: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    pub values: Vec<f64>,
    /// Polygon vertex coordinates.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub x: Vec<f64>,
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub y: Vec<f64>,
    /// Image side; defaults to the display resolution.
    #[arg(long)]
    pub n: Option<usize>,
}

#[derive(Args, Debug)]
pub struct ProjectArgs {
    /// Phantom description file, projected by exact line integrals.
    #[arg(long, conflicts_with = "image", required_unless_present = "image")]
    pub phantom: Option<PathBuf>,
    /// Image file, projected with the system matrix.
    #[arg(long)]
    pub image: Option<PathBuf>,
    /// Resolution used to size the default geometry.
    #[arg(long)]
    pub n: Option<usize>,
}

#[derive(Args, Debug)]
pub struct NoiseArgs {
    #[arg(long)]
    pub sinogram: PathBuf,
    /// Standard deviation relative to the data maximum.
    #[arg(long)]
    pub level: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args, Debug)]
pub struct ReconstructArgs {
    #[arg(long)]
    pub sinogram: PathBuf,
    #[arg(long)]
    pub alpha: f64,
    #[arg(long)]
    pub n: Option<usize>,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[arg(long)]
    pub sinogram: PathBuf,
    #[arg(long, value_delimiter = ',')]
    pub alphas: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    pub resolutions: Vec<usize>,
    /// Worker threads; defaults to one per core.
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Args, Debug)]
pub struct SelectArgs {
    #[arg(long)]
    pub sweep: PathBuf,
    #[arg(long, value_enum)]
    pub method: Option<MethodArg>,
    /// Stability tolerance for `multires`.
    #[arg(long)]
    pub tol: Option<f64>,
    /// Resolution for `scurve` and `lcurve`; defaults to the finest in the table.
    #[arg(long)]
    pub n: Option<usize>,
    /// Prior image for `scurve`; repeatable.
    #[arg(long)]
    pub prior: Vec<PathBuf>,
    /// Measured sinogram, needed by `scurve` to rescale the priors.
    #[arg(long)]
    pub sinogram: Option<PathBuf>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Multires,
    Scurve,
    Lcurve,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Multires => Method::Multires,
            MethodArg::Scurve => Method::Scurve,
            MethodArg::Lcurve => Method::Lcurve,
        }
    }
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    #[arg(long)]
    pub sweep: PathBuf,
    #[arg(long)]
    pub tol: Option<f64>,
    /// Also reconstruct the selected alpha at the finest resolution.
    #[arg(long)]
    pub sinogram: Option<PathBuf>,
    /// Images to export as PGM; repeatable.
    #[arg(long)]
    pub image: Vec<PathBuf>,
}

/// Failure surfaced to the user, with the process exit code it maps to.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Core { context: String, source: Error },
}

pub const EXIT_USAGE: u8 = 2;
pub const EXIT_IO: u8 = 3;
pub const EXIT_SOLVER: u8 = 4;
pub const EXIT_SELECTION: u8 = 5;

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Usage(_) => EXIT_USAGE,
            Failure::Core { source, .. } => match source {
                Error::Io(_) => EXIT_IO,
                Error::SolverFailure { .. } | Error::LinearSolve { .. } => EXIT_SOLVER,
                Error::NoSelection { .. }
                | Error::OutOfRange { .. }
                | Error::DegeneratePrior { .. }
                | Error::IncompleteTable(_) => EXIT_SELECTION,
                _ => EXIT_USAGE,
            },
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Usage(m) => write!(f, "usage: {m}"),
            Failure::Core { context, source } => write!(f, "{context}: {source}"),
        }
    }
}

pub trait Context<T> {
    fn ctx(self, context: impl FnOnce() -> String) -> Result<T, Failure>;
}

impl<T> Context<T> for tvtomo_core::Result<T> {
    fn ctx(self, context: impl FnOnce() -> String) -> Result<T, Failure> {
        self.map_err(|source| Failure::Core {
            context: context(),
            source,
        })
    }
}

impl<T> Context<T> for std::io::Result<T> {
    fn ctx(self, context: impl FnOnce() -> String) -> Result<T, Failure> {
        self.map_err(Error::from).ctx(context)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let argv: Vec<String> = std::env::args().collect();
    match commands::run(&cli, &argv) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("tvtomo: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
