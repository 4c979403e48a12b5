//! `linsys`: simulation, numerics and verification checks for linear
//! particle systems, driven by a JSON run configuration.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use config::RunConfig;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error(transparent)]
    Core(#[from] linsys_core::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Io(_) => 2,
            CliError::Core(e) if e.is_configuration() => 2,
            CliError::Core(_) => 3,
        }
    }

    fn kind(&self) -> &'static str {
        match self.exit_code() {
            2 => "configuration",
            _ => "numerical",
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "linsys", version, about = "Linear particle systems on Z^d: simulation, Green functions, Feynman-Kac estimators and checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Overrides the seed in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker thread cap; results do not depend on it.
    #[arg(long, global = true, env = "LINSYS_THREADS")]
    threads: Option<usize>,

    /// Directory for output artifacts.
    #[arg(long, global = true, default_value = ".")]
    output_dir: PathBuf,
}

#[derive(Subcommand, Debug, Clone, PartialEq, Eq)]
pub enum Command {
    /// Run an ensemble and write its summary (JSON) and trajectories (CSV).
    Simulate(Args),
    /// Green function of the symmetrized walk, pi_d, the criterion and h.
    Green(Args),
    /// Evaluate the survival criterion kappa_2 G(0) / 2 < 1.
    Criterion(Args),
    /// Exact two-point function on a finite box.
    OracleTwoPoint(Args),
    /// Weighted-walk estimate of sum f(x - x~) E[eta_x eta_x~].
    Fk3(Args),
    /// Central limit check on survivors.
    VerifyClt(Args),
    /// Limit covariance against 1 + kappa_2 G(a-b) / (2 - kappa_2 G(0)).
    VerifyCov(Args),
    /// Decay of the replica overlap.
    VerifyOverlap(Args),
    /// Mean normalized mass stays at |eta_0|.
    VerifyMartingale(Args),
    /// Kernel conditions.
    ValidateKernel(Args),
}

#[derive(clap::Args, Debug, Clone, PartialEq, Eq)]
pub struct Args {
    /// Config file, or inline JSON starting with `{`.
    #[arg(long, short)]
    config: String,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Simulate(_) => "simulate",
            Command::Green(_) => "green",
            Command::Criterion(_) => "criterion",
            Command::OracleTwoPoint(_) => "oracle-two-point",
            Command::Fk3(_) => "fk3",
            Command::VerifyClt(_) => "verify-clt",
            Command::VerifyCov(_) => "verify-cov",
            Command::VerifyOverlap(_) => "verify-overlap",
            Command::VerifyMartingale(_) => "verify-martingale",
            Command::ValidateKernel(_) => "validate-kernel",
        }
    }

    fn args(&self) -> &Args {
        match self {
            Command::Simulate(a)
            | Command::Green(a)
            | Command::Criterion(a)
            | Command::OracleTwoPoint(a)
            | Command::Fk3(a)
            | Command::VerifyClt(a)
            | Command::VerifyCov(a)
            | Command::VerifyOverlap(a)
            | Command::VerifyMartingale(a)
            | Command::ValidateKernel(a) => a,
        }
    }
}

fn run(cli: &Cli) -> Result<bool, CliError> {
    let mut cfg = RunConfig::load(&cli.command.args().config)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    }
    std::fs::create_dir_all(&cli.output_dir).map_err(|e| CliError::Io(format!("{}: {e}", cli.output_dir.display())))?;
    commands::dispatch(&cli.command, cfg, &cli.output_dir)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            let err = json!({"error": {"kind": e.kind(), "command": cli.command.name(), "message": e.to_string()}});
            eprintln!("{err}");
            ExitCode::from(e.exit_code())
        }
    }
}
