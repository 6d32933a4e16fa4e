//! Command-line runner: config parsing, pre-flight resource estimate and the
//! solve / verify-lemmas / compare-nls / estimate-constant workflows.

pub mod commands;
pub mod config;
pub mod output;
pub mod preflight;

use std::path::PathBuf;

use anyhow::{bail, Result};
use clap::{Parser, Subcommand};

use config::{ClosureName, QuadratureName, RunConfig};
use output::{OutputDir, Status};

#[derive(Parser, Debug)]
#[command(name = "gph", version, about = "Truncated Gross-Pitaevskii hierarchy runs and estimate checks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Run configuration (JSON)
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory, overrides `output_dir`
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Run even when the pre-flight estimate exceeds the memory budget
    #[arg(long, global = true)]
    pub override_budget: bool,
    #[arg(long, global = true, value_enum)]
    pub quadrature: Option<QuadratureName>,
    #[arg(long, global = true, value_enum)]
    pub closure: Option<ClosureName>,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    /// Picard iteration of the hierarchy with bound checks
    Solve,
    /// Integral-inequality and binomial checks
    VerifyLemmas,
    /// Hierarchy run against the NLS factorized trajectory
    CompareNls,
    /// Empirical collapse constant from random test kernels
    EstimateConstant,
}

pub const EXIT_PASS: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_FLAGGED: i32 = 2;

/// Config after command-line overrides.
pub fn effective_config(cli: &Cli) -> Result<RunConfig> {
    let Some(path) = &cli.config else {
        bail!("--config PATH is required");
    };
    let mut cfg = RunConfig::load(path)?;
    if let Some(out) = &cli.out {
        cfg.output_dir = out.clone();
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(q) = cli.quadrature {
        cfg.quadrature = q;
    }
    if let Some(c) = cli.closure {
        cfg.closure = c;
    }
    // overrides must still form a valid config
    let cfg = RunConfig::parse(&serde_json::to_string(&cfg)?)?;
    Ok(cfg)
}

pub fn run(cli: &Cli) -> Result<Status> {
    let cfg = effective_config(cli)?;
    let out = OutputDir::create(&cfg.output_dir)?;
    out.json("config.json", &cfg)?;
    match cli.command {
        Command::Solve | Command::CompareNls => {
            let phi = cfg.wavefunction()?;
            let solver = cfg.solver_config(phi.as_ref())?;
            let pre = preflight::preflight(&solver);
            eprint!("{}", pre.render());
            if !pre.within_budget {
                if !cli.override_budget {
                    bail!(
                        "pre-flight estimate exceeds the memory budget of {} bytes; pass --override-budget or raise {}",
                        pre.budget_bytes,
                        gp_hierarchy::budget::BUDGET_ENV_VAR
                    );
                }
                eprintln!("warning: running over the memory budget on request");
                gp_hierarchy::budget::set_budget_bytes(u64::MAX);
            }
            let gamma0 = cfg.initial_hierarchy(phi.as_ref(), &solver)?;
            if cli.command == Command::Solve {
                commands::solve_command(&cfg, solver, gamma0, &pre, &out)
            } else {
                commands::compare_command(&cfg, solver, gamma0, &pre, &out)
            }
        }
        Command::VerifyLemmas => commands::verify_lemmas_command(&cfg, &out),
        Command::EstimateConstant => commands::estimate_command(&cfg, &out),
    }
}

/// Exit code for a parsed command line.
pub fn main_with(cli: &Cli) -> i32 {
    match run(cli) {
        Ok(Status::Pass) => EXIT_PASS,
        Ok(_) => EXIT_FLAGGED,
        Err(e) => {
            eprintln!("error: {e:#}");
            EXIT_ERROR
        }
    }
}
