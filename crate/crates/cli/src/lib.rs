//! Command-line harness around `phaselab-core`: configuration, run
//! directories with hashed manifests, and one subcommand per experiment.

pub mod commands;
pub mod config;
pub mod output;

use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

pub use commands::{Outcome, Status};
pub use config::RunConfig;
pub use output::{RunDir, RunManifest};

/// Exit code for invalid input or any other error before a run completes.
pub const EXIT_INVALID: i32 = 1;

#[derive(Debug, Parser)]
#[command(name = "phaselab", version, about = "Mean-field phase diagrams and Langevin ensembles of two-layer networks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Master seed; overrides `seed` in the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Skip the desk-scale cost guard of sampling commands.
    #[arg(long, global = true)]
    pub force: bool,
    /// Run directory; overrides `output_dir` in the config.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Root for relative `output_dir` values.
    #[arg(long, global = true, env = "PHASELAB_OUT")]
    pub out_root: Option<PathBuf>,
    /// Override a config field, e.g. `--set ts.N=350` (repeatable).
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Teacher-student σ² scan of the self-consistent theory.
    TsTheory { config: PathBuf },
    /// Modular-arithmetic σ² scan and phase boundaries.
    ModTheory { config: PathBuf },
    /// One Langevin ensemble and its estimators.
    Sample { config: PathBuf },
    /// Langevin ensembles across `scan.values` of `scan.variable`.
    Scan { config: PathBuf },
    /// Oracle checks: kernel symmetries, integrals, gradients, prior moments.
    Verify { config: PathBuf },
    /// Continue a `sample` run directory from its checkpoint.
    Resume { run_dir: PathBuf },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::TsTheory { .. } => "ts-theory",
            Command::ModTheory { .. } => "mod-theory",
            Command::Sample { .. } => "sample",
            Command::Scan { .. } => "scan",
            Command::Verify { .. } => "verify",
            Command::Resume { .. } => "resume",
        }
    }
}

/// Load, override and validate a config for `command`.
pub fn load_config(path: &std::path::Path, cli: &Cli) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(path, &cli.overrides)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Where a command writes: `--out`, else `output_dir` under the output root,
/// else a directory named after the command.
pub fn run_dir_for(cfg: &RunConfig, cli: &Cli) -> PathBuf {
    if let Some(out) = &cli.out {
        return out.clone();
    }
    let rel = cfg.output_dir.clone().unwrap_or_else(|| PathBuf::from(cli.command.name()));
    match &cli.out_root {
        Some(root) if rel.is_relative() => root.join(rel),
        _ => rel,
    }
}

/// Run one command against an already validated config.
pub fn execute(command: &Command, cfg: &RunConfig, run: &mut RunDir, force: bool) -> Result<Outcome> {
    match command {
        Command::TsTheory { .. } => commands::ts_theory(cfg, run),
        Command::ModTheory { .. } => commands::mod_theory(cfg, run),
        Command::Sample { .. } => commands::sample(cfg, run, force),
        Command::Scan { .. } => commands::sweep(cfg, run, force),
        Command::Verify { .. } => commands::verify(cfg, run),
        Command::Resume { .. } => commands::resume(run, force),
    }
}

/// Full CLI flow; returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    match try_run(&cli) {
        Ok((status, dir)) => {
            eprintln!("{}: {} ({})", cli.command.name(), status.as_str(), dir.display());
            status.exit_code()
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            EXIT_INVALID
        }
    }
}

fn try_run(cli: &Cli) -> Result<(Status, PathBuf)> {
    if let Some(t) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(t).build_global().context("--threads")?;
    }
    let (cfg_json, dir, cfg) = match &cli.command {
        Command::Resume { run_dir } => {
            let text = std::fs::read_to_string(run_dir.join(commands::CONFIG))
                .with_context(|| format!("{}: not a sample run directory", run_dir.display()))?;
            (text, run_dir.clone(), None)
        }
        Command::TsTheory { config }
        | Command::ModTheory { config }
        | Command::Sample { config }
        | Command::Scan { config }
        | Command::Verify { config } => {
            let cfg = load_config(config, cli)?;
            (cfg.canonical_json()?, run_dir_for(&cfg, cli), Some(cfg))
        }
    };
    let mut run = RunDir::new(dir.clone(), cli.command.name(), &cfg_json);
    let outcome = match &cfg {
        Some(cfg) => execute(&cli.command, cfg, &mut run, cli.force)?,
        None => commands::resume(&mut run, cli.force)?,
    };
    run.finish(outcome.status.as_str())?;
    Ok((outcome.status, dir))
}
