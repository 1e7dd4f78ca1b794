//! `jisst`: generate joint network-population datasets, fit the joint
//! factorizations, and run the simulation benchmarks from the shell.
//!
//! Exit codes: 0 on success, 2 for usage and configuration problems, 3 for
//! numerical failures.

mod bench;
mod commands;

use std::process::ExitCode;

use clap::{Parser, Subcommand};
use jisstpca::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "jisst", version, about = "Joint semi-symmetric tensor PCA toolkit")]
struct Cli {
    /// Worker threads for replicate-parallel runs; the JISST_THREADS
    /// environment variable is the fallback, and the default uses every
    /// core.
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a dataset from a JSON recipe into a directory.
    Simulate(commands::SimulateArgs),
    /// Fit a joint factor stack to tensor files.
    Fit(commands::FitArgs),
    /// Run an experiment configuration file and write its report.
    Eval(bench::EvalArgs),
    /// Run a named benchmark preset (fig1, fig2, table1, lambda).
    Bench(bench::BenchArgs),
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: &Cli) -> Result<()> {
    configure_threads(cli.threads)?;
    match &cli.command {
        Command::Simulate(args) => commands::simulate(args),
        Command::Fit(args) => commands::fit(args),
        Command::Eval(args) => bench::eval(args),
        Command::Bench(args) => bench::bench(args),
    }
}

/// Size the global worker pool from `--threads`, else `JISST_THREADS`, else
/// leave the all-cores default in place.
fn configure_threads(flag: Option<usize>) -> Result<()> {
    let n = match flag {
        Some(n) => Some(n),
        None => match std::env::var("JISST_THREADS") {
            Ok(s) => Some(s.trim().parse::<usize>().map_err(|_| {
                Error::Config(format!("JISST_THREADS must be a thread count, got {s:?}"))
            })?),
            Err(_) => None,
        },
    };
    if let Some(n) = n {
        if n == 0 {
            return Err(Error::Config("thread count must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    }
    Ok(())
}
