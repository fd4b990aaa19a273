//! `parreg`: configuration-driven front end.
//!
//! Exit status: 0 when every check passes, 2 when a quantitative check
//! fails, 1 on any operational error.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context as _, Result};
use clap::{Parser, ValueEnum};

use commands::Context;
use config::Config;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Command {
    Certify,
    Solve,
    Estimate,
    SweepLambda,
    McValidate,
    OuSolve,
    EllipticCheck,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Certify => "certify",
            Command::Solve => "solve",
            Command::Estimate => "estimate",
            Command::SweepLambda => "sweep-lambda",
            Command::McValidate => "mc-validate",
            Command::OuSolve => "ou-solve",
            Command::EllipticCheck => "elliptic-check",
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "parreg", version, about = "Backward parabolic solvers and estimate checks")]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// JSON experiment configuration.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the configuration's RNG seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Caps the number of worker threads (results do not depend on it).
    #[arg(long)]
    threads: Option<usize>,
    /// Directory for reports (created if missing).
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

fn run(cli: Cli) -> Result<bool> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .context("cannot configure worker threads")?;
    }
    let mut config = Config::load(&cli.config)?;
    if let Some(cmd) = &config.command {
        if cmd != cli.command.name() {
            anyhow::bail!(
                "invalid config: key 'command' is '{cmd}' but '{}' was requested",
                cli.command.name()
            );
        }
    }
    if cli.seed.is_some() {
        config.seed = cli.seed;
    }
    std::fs::create_dir_all(&cli.out)
        .with_context(|| format!("cannot create {}", cli.out.display()))?;
    let ctx = Context {
        base_dir: commands::base_dir(&cli.config),
        out_dir: cli.out.clone(),
        config,
    };
    match cli.command {
        Command::Certify => commands::certify(&ctx),
        Command::Solve => commands::solve(&ctx),
        Command::Estimate => commands::estimate(&ctx),
        Command::SweepLambda => commands::sweep_lambda(&ctx),
        Command::McValidate => commands::mc_validate(&ctx),
        Command::OuSolve => commands::ou_solve(&ctx),
        Command::EllipticCheck => commands::elliptic_check(&ctx),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let name = cli.command.name();
    match run(cli) {
        Ok(true) => {
            println!("{name}: pass");
            ExitCode::SUCCESS
        }
        Ok(false) => {
            println!("{name}: check failed");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
