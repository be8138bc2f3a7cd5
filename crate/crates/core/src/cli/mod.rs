//! Command-line driver.
//!
//! Exit codes: `0` success, `1` usage or config error, `2` non-convergence,
//! `3` verification failure.

pub mod commands;
pub mod config;
pub mod verify;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::error::Error;
use config::RunConfig;

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_NOT_CONVERGED: i32 = 2;
pub const EXIT_VERIFY_FAILED: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "majorminor", version, about = "Major-minor mean field game solver and verification harness")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Run configuration; built-in defaults when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Output directory, overriding `[output] dir`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    /// Master seed, overriding `[simulation] seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Only report errors.
    #[arg(long, global = true)]
    pub quiet: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Solve the mean-field fixed point for the configured major paths.
    SolveEquilibrium,
    /// Optimize the major control.
    OptimizeMajor,
    /// Solve the equilibrium and run the N-player Monte Carlo checks.
    Simulate,
    /// Run the cross-module invariant suite.
    Verify,
    /// Dump the linear-quadratic oracle solution.
    LqOracle,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::SolveEquilibrium => "solve-equilibrium",
            Command::OptimizeMajor => "optimize-major",
            Command::Simulate => "simulate",
            Command::Verify => "verify",
            Command::LqOracle => "lq-oracle",
        }
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig, Error> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(out) = &cli.out {
        cfg.output.dir = out.clone();
    }
    if let Some(seed) = cli.seed {
        cfg.simulation.seed = seed;
    }
    Ok(cfg)
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
        }
    };
    let level = if cli.quiet { log::LevelFilter::Error } else { log::LevelFilter::Info };
    let _ = env_logger::Builder::new().filter_level(level).parse_default_env().try_init();
    let cfg = match load_config(&cli) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_ERROR;
        }
    };
    let result = match cli.command {
        Command::SolveEquilibrium => commands::solve_equilibrium(&cfg, cli.quiet),
        Command::OptimizeMajor => commands::optimize_major(&cfg, cli.quiet),
        Command::Simulate => commands::simulate(&cfg, cli.quiet),
        Command::Verify => verify::run(&cfg, cli.quiet),
        Command::LqOracle => commands::lq_oracle(&cfg, cli.quiet),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_ERROR
        }
    }
}

pub fn main() -> i32 {
    run(std::env::args_os())
}
