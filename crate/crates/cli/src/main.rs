mod commands;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;

use commands::{ConvArgs, DensityArgs, EquivArgs, GenArgs, InvdecayArgs, KernelArgs, NormsArgs, StabArgs, SynthArgs};

#[derive(Parser)]
#[command(name = "locop", version, about = "Finite-window analysis of localized matrices and operators")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a test corpus with a checksum manifest.
    Gen(GenArgs),
    /// Localization norms, upper constants and truncation tails of a matrix.
    Norms(NormsArgs),
    /// Lower and upper constants over a window ladder.
    Stab(StabArgs),
    /// Cross-p stabilization report over a window ladder.
    Equiv(EquivArgs),
    /// Symbol test for a convolution sequence.
    Conv(ConvArgs),
    /// Off-diagonal decay of the inverse.
    Invdecay(InvdecayArgs),
    /// Counting condition between two index sets.
    Density(DensityArgs),
    /// Stability of a synthesis operator through its discretizations.
    Synth(SynthArgs),
    /// Discretization error curve and perturbed identity of an integral operator.
    Kernel(KernelArgs),
    /// Run the analysis described by a JSON config.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Debug)]
pub enum CliError {
    Core(locop_core::Error),
    Io { path: PathBuf, message: String },
    Parse(String),
    Threads(String),
}

impl CliError {
    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Io { path: path.to_path_buf(), message: e.to_string() }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Core(e) if e.is_numerical() => "numerical",
            CliError::Core(locop_core::Error::Precondition(_)) => "precondition",
            CliError::Core(locop_core::Error::Invariant(_)) => "invariant",
            CliError::Core(_) => "invalid_input",
            CliError::Io { .. } => "io",
            CliError::Parse(_) => "parse",
            CliError::Threads(_) => "config",
        }
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(e) if e.is_numerical() => 3,
            _ => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Io { path, message } => write!(f, "{}: {message}", path.display()),
            CliError::Parse(m) | CliError::Threads(m) => f.write_str(m),
        }
    }
}

impl From<locop_core::Error> for CliError {
    fn from(e: locop_core::Error) -> Self {
        CliError::Core(e)
    }
}

#[derive(Serialize)]
struct ErrorReport<'a> {
    error: ErrorBody<'a>,
}

#[derive(Serialize)]
struct ErrorBody<'a> {
    kind: &'a str,
    message: String,
    exit_code: u8,
}

/// `LOCOP_THREADS` caps the rayon pool; `0` means serial.
fn configure_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var("LOCOP_THREADS") else {
        return Ok(());
    };
    let n: usize = v.trim().parse().map_err(|_| CliError::Threads(format!("LOCOP_THREADS must be an integer, got {v:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n.max(1))
        .build_global()
        .map_err(|e| CliError::Threads(e.to_string()))
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    configure_threads()?;
    match cli.command {
        Command::Gen(a) => commands::gen(&a),
        Command::Norms(a) => commands::norms(&a),
        Command::Stab(a) => commands::stab(&a),
        Command::Equiv(a) => commands::equiv(&a),
        Command::Conv(a) => commands::conv(&a),
        Command::Invdecay(a) => commands::invdecay(&a),
        Command::Density(a) => commands::density(&a),
        Command::Synth(a) => commands::synth(&a),
        Command::Kernel(a) => commands::kernel(&a),
        Command::Run { config } => commands::run(&config),
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code = e.exit_code();
            let report = ErrorReport { error: ErrorBody { kind: e.kind(), message: e.to_string(), exit_code: code } };
            eprintln!("{}", serde_json::to_string(&report).unwrap_or_else(|_| format!("{{\"error\":\"{e}\"}}")));
            ExitCode::from(code)
        }
    }
}
