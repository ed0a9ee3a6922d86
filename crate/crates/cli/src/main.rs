mod commands;
mod config;
mod error;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::commands::Context;
use crate::config::RunConfig;
use crate::error::{CliError, Result};

const OUT_DIR_VAR: &str = "MULTIBUMP_OUT_DIR";
const WORKERS_VAR: &str = "MULTIBUMP_WORKERS";

/// Multi-bump solutions of -Δu + a(x)u = u^p.
#[derive(Debug, Parser)]
#[command(name = "multibump", version)]
struct Cli {
    /// TOML config file; built-in defaults when omitted.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,

    /// Override a config key, e.g. `--set grid.L=17.5`. Applied in order.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,

    /// Parent of the run directories [env: MULTIBUMP_OUT_DIR].
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,

    /// Worker threads [env: MULTIBUMP_WORKERS].
    #[arg(long, global = true)]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve for the radial ground state and write its profile.
    Groundstate {
        /// Compare against the closed-form soliton (N = 1 only).
        #[arg(long)]
        validate: bool,
    },
    /// Minimise the energy over the constraint set for fixed centers.
    Minimize {
        /// CSV file with one row of N coordinates per center.
        #[arg(long)]
        centers: Option<PathBuf>,
        /// Previous minimize run to restart from its field checkpoint.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Maximise the constrained minimum over bump configurations for `minimax.k`.
    Minimax,
    /// Run the min-max search for every k in a range.
    Sweep {
        #[arg(long)]
        k_lo: usize,
        #[arg(long)]
        k_hi: usize,
        /// Use the interaction surrogate only, with no field solves.
        #[arg(long)]
        surrogate_only: bool,
        /// Cap radii of the equidistribution counts.
        #[arg(long, value_delimiter = ',', default_value = "0.2,0.4")]
        eps: Vec<f64>,
    },
    /// Collect results under a directory into an asymptotics report.
    Diagnose {
        results: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "0.2,0.4")]
        eps: Vec<f64>,
    },
}

fn env_workers() -> Result<Option<usize>> {
    match std::env::var(WORKERS_VAR) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| CliError::Usage(format!("{WORKERS_VAR} = `{v}` is not a worker count"))),
        Err(_) => Ok(None),
    }
}

fn execute(cli: Cli, args: Vec<String>) -> Result<()> {
    let text = match &cli.config {
        Some(p) => std::fs::read_to_string(p).map_err(|e| CliError::file(p, e))?,
        None => String::new(),
    };
    let config = RunConfig::load(&text, &cli.overrides)?;

    if let Some(n) = cli.workers.or(env_workers()?) {
        if n == 0 {
            return Err(CliError::Usage("worker count must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }

    let out_dir = cli
        .out_dir
        .clone()
        .or_else(|| std::env::var_os(OUT_DIR_VAR).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(&config.output.dir));
    let ctx = Context { config, out_dir, args };
    match &cli.command {
        Command::Groundstate { validate } => commands::groundstate(&ctx, *validate),
        Command::Minimize { centers, resume } => commands::minimize(&ctx, centers.as_deref(), resume.as_deref()),
        Command::Minimax => commands::minimax(&ctx),
        Command::Sweep { k_lo, k_hi, surrogate_only, eps } => commands::sweep(&ctx, *k_lo, *k_hi, *surrogate_only, eps),
        Command::Diagnose { results, eps } => commands::diagnose(&ctx, results, eps),
    }
    .map(|_| ())
}

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().collect();
    let cli = Cli::parse();
    match execute(cli, args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
