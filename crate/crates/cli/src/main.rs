use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use fracvar_cli::commands::{self, CheckKind, Outcome, TransformArgs};
use fracvar_cli::config::ProblemConfig;
use fracvar_cli::error::{CliError, Result};

/// Fractional variational mechanics from INI problem files.
#[derive(Debug, Parser)]
#[command(name = "fracvar", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Problem configuration file.
    config: PathBuf,

    /// Replaces the configured lagrangian.
    #[arg(long, global = true)]
    lagrangian: Option<String>,

    /// Replaces the configured hamiltonian.
    #[arg(long, global = true)]
    hamiltonian: Option<String>,

    /// Output directory; defaults to `[output] dir`.
    #[arg(short = 'o', long = "out", global = true)]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print partial derivatives, momenta, Euler–Lagrange equations and H.
    Derive {
        #[command(flatten)]
        common: Common,
    },
    /// Solve the boundary value problem and write trajectory.csv.
    Solve {
        #[command(flatten)]
        common: Common,
    },
    /// Check a trajectory against the Euler–Lagrange or canonical equations,
    /// or test a constant of motion.
    Check {
        kind: CheckKind,
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        trajectory: PathBuf,
        /// Candidate constant of motion in t, q<k>, p<k>.
        #[arg(long)]
        expr: Option<String>,
    },
    /// Verify a canonical transformation between two trajectories.
    Transform {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
        kind: u8,
        /// Generating function.
        #[arg(long = "f", allow_hyphen_values = true)]
        f: String,
        #[arg(long)]
        old: PathBuf,
        #[arg(long)]
        new: PathBuf,
        /// New hamiltonian; defaults to the old one.
        #[arg(long = "k", allow_hyphen_values = true)]
        k: Option<String>,
    },
    /// Evaluate the Hamilton–Jacobi residual of a second-kind generating function.
    Hj {
        #[command(flatten)]
        common: Common,
        #[arg(long, allow_hyphen_values = true)]
        f2: String,
        #[arg(long)]
        trajectory: PathBuf,
        /// New momenta, comma separated.
        #[arg(long = "P", allow_hyphen_values = true)]
        new_momenta: String,
    },
    /// Apply one fractional operator to a function of t.
    Operator {
        #[command(flatten)]
        common: Common,
        #[arg(long = "fn", allow_hyphen_values = true)]
        function: String,
        /// cl, cr, rll, rlr, cc or crl.
        #[arg(long)]
        which: String,
        /// Coordinate whose orders are used.
        #[arg(long, default_value_t = 1)]
        coord: usize,
    },
}

fn load(common: &Common) -> Result<ProblemConfig> {
    let seed = std::env::var("FRACVAR_SEED").ok();
    let mut cfg = ProblemConfig::load(&common.config, seed.as_deref())?;
    cfg.apply_overrides(common.lagrangian.as_deref(), common.hamiltonian.as_deref())?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<Outcome> {
    match cli.command {
        Command::Derive { common } => commands::derive(&load(&common)?),
        Command::Solve { common } => commands::solve(&load(&common)?, common.out.as_deref()),
        Command::Check { kind, common, trajectory, expr } => {
            commands::check(&load(&common)?, kind, &trajectory, expr.as_deref(), common.out.as_deref())
        }
        Command::Transform { common, kind, f, old, new, k } => {
            let args = TransformArgs { kind, f: &f, old: &old, new: &new, k: k.as_deref() };
            commands::transform(&load(&common)?, &args, common.out.as_deref())
        }
        Command::Hj { common, f2, trajectory, new_momenta } => {
            commands::hj(&load(&common)?, &f2, &trajectory, &new_momenta, common.out.as_deref())
        }
        Command::Operator { common, function, which, coord } => {
            commands::operator(&load(&common)?, &function, &which, coord, common.out.as_deref())
        }
    }
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(outcome) => {
            print!("{}", outcome.text);
            ExitCode::from(if outcome.passed { 0 } else { 1 })
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(CliError::exit_code(&e) as u8)
        }
    }
}
