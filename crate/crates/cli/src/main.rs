//! `conelq`: solve, verify and sweep cone-constrained LQ games with jumps.
//!
//! Exit codes: 0 success, 1 configuration or usage error, 2 solver error,
//! 3 a verification check failed.

mod artifact;
mod config;
mod hamiltonian;
mod solve;
mod sweep;
mod verify;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub const EXIT_CONFIG: u8 = 1;
pub const EXIT_SOLVER: u8 = 2;
pub const EXIT_VERIFY: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "conelq", version, about = "Cone-constrained zero-sum LQ games with jumps")]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Global {
    /// Problem file (JSON).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed for every random draw.
    #[arg(long, global = true, default_value_t = 42)]
    pub seed: u64,
    /// Output directory, created if missing.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    #[arg(long, global = true, value_enum, default_value_t = Format::Both)]
    pub format: Format,
    /// Overrides the lower coercivity constant of the problem file.
    #[arg(long, global = true)]
    pub delta_lower: Option<f64>,
    /// Overrides the number of grid steps.
    #[arg(long, global = true, conflicts_with = "dt")]
    pub n_steps: Option<usize>,
    /// Overrides the step size; the horizon must be a whole multiple of it.
    #[arg(long, global = true)]
    pub dt: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
    Both,
}

impl Format {
    pub fn json(self) -> bool {
        matches!(self, Format::Json | Format::Both)
    }

    pub fn csv(self) -> bool {
        matches!(self, Format::Csv | Format::Both)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Ode,
    Lattice,
    Ladder,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve the coupled Riccati pair and write the solution and assumption report.
    Solve(solve::SolveArgs),
    /// Run the Monte Carlo and pointwise verification suites.
    Verify(verify::VerifyArgs),
    /// Solve (and optionally verify) once per value of a scalar parameter.
    Sweep(sweep::SweepArgs),
    /// Single-snapshot Hamiltonian tools.
    Hamiltonian {
        #[command(subcommand)]
        command: hamiltonian::HamiltonianCommand,
    },
}

/// Failure of a command, mapped to an exit code.
#[derive(Debug)]
pub enum Failure {
    Config(String),
    Solver(String),
    Verify(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => EXIT_CONFIG,
            Failure::Solver(_) => EXIT_SOLVER,
            Failure::Verify(_) => EXIT_VERIFY,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Config(m) | Failure::Solver(m) | Failure::Verify(m) => m,
        }
    }
}

impl From<conelq::Error> for Failure {
    fn from(e: conelq::Error) -> Self {
        if e.is_solver_failure() {
            Failure::Solver(e.to_string())
        } else {
            Failure::Config(e.to_string())
        }
    }
}

pub type CmdResult<T> = std::result::Result<T, Failure>;

fn init_threads() -> CmdResult<()> {
    let Ok(v) = std::env::var("CONELQ_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Failure::Config(format!("CONELQ_THREADS must be a positive integer, got `{v}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure::Config(format!("cannot configure {n} worker threads: {e}")))
}

fn run(cli: Cli) -> CmdResult<()> {
    init_threads()?;
    match cli.command {
        Command::Solve(args) => solve::run(&cli.global, &args),
        Command::Verify(args) => verify::run(&cli.global, &args),
        Command::Sweep(args) => sweep::run(&cli.global, &args),
        Command::Hamiltonian { command } => hamiltonian::run(&cli.global, &command),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_CONFIG) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("conelq: {}", f.message().replace('\n', " "));
            ExitCode::from(f.code())
        }
    }
}
