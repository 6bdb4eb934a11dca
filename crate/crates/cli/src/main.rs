mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::ScanVariant;

#[derive(Debug)]
pub enum CliError {
    /// Bad flags, config or parameters; exit 2.
    Usage(String),
    /// Computation or I/O failure; exit 1.
    Failed(String),
}

impl From<bbm_core::Error> for CliError {
    fn from(e: bbm_core::Error) -> Self {
        use bbm_core::Error as E;
        match e {
            E::InvalidParameter(_) | E::InvalidGrid(_) | E::Parse(_) | E::DomainTooSmall(_) => Self::Usage(e.to_string()),
            _ => Self::Failed(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::Failed(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        Self::Failed(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(name = "bbm-lab", version, about = "Two-soliton construction and collision experiments for the BBM equation")]
#[command(after_long_help = config::CONFIG_KEYS)]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Global {
    /// TOML config file, or JSON when the name ends in .json
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Print the machine-readable report instead of the table
    #[arg(long, global = true)]
    pub json: bool,
    /// Directory for report files
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads for sweeps
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Integral identities of the soliton profiles and images under L
    Identities {
        #[arg(long)]
        grid_n: Option<usize>,
        #[arg(long)]
        half_length: Option<f64>,
    },
    /// Expansion coefficients with closed-form vs numeric deltas
    Coeffs {
        #[arg(long, conflicts_with = "sweep")]
        lambda: Option<f64>,
        /// Sweep λ over (0, 1) and write CSV
        #[arg(long)]
        sweep: bool,
    },
    /// Sampled correction profiles for one λ as CSV
    Profiles {
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long)]
        stride: Option<usize>,
    },
    /// Residual and endpoint scaling of the approximate solution in σ
    ResidualScan {
        #[arg(long)]
        lambda: Option<f64>,
        /// Comma-separated σ values
        #[arg(long, value_parser = config::parse_list)]
        sigmas: Option<config::Reals>,
        #[arg(long, value_enum)]
        variant: Option<ScanVariant>,
    },
    /// Evolve a sum of solitons and record conserved quantities
    Simulate {
        /// Comma-separated speeds
        #[arg(long, value_parser = config::parse_list)]
        speeds: Option<config::Reals>,
        /// Comma-separated initial centers
        #[arg(long, value_parser = config::parse_list)]
        centers: Option<config::Reals>,
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long)]
        t_end: Option<f64>,
    },
    /// One collision experiment
    Collide(SpeedFlags),
    /// Collision sweep over c₂ with exponent fits
    Scaling {
        #[arg(long)]
        c1: Option<f64>,
        /// Comma-separated c₂ values
        #[arg(long, value_parser = config::parse_list)]
        c2_values: Option<config::Reals>,
    },
    /// Localized mass and energy functionals along one collision
    Diagnostics(SpeedFlags),
}

#[derive(Debug, Args)]
pub struct SpeedFlags {
    #[arg(long)]
    pub c1: Option<f64>,
    #[arg(long)]
    pub c2: Option<f64>,
    #[arg(long)]
    pub dt: Option<f64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(j) = cli.global.jobs {
        if j == 0 {
            eprintln!("error: --jobs must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(j).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match commands::run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(CliError::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(CliError::Failed(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}
