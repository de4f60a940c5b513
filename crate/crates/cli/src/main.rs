//! Batch driver for the momentum-grid few-body engine.
//!
//! Verbs: `spectrum`, `scatter`, `cluster-check`, `rep-check`, plus
//! `run` which executes the task named in the configuration file. All
//! outputs are deterministic: identical configuration and seed produce
//! byte-identical CSV tables and manifest.
//!
//! Exit codes: 0 success, 2 configuration error, 3 numerical diagnostic
//! failure (artifacts are still written in that case).

mod config;
mod output;
mod tasks;

use clap::{Parser, Subcommand};
use config::{RunConfig, Task};
use std::path::PathBuf;
use std::process::ExitCode;
use tasks::TaskError;

#[derive(Parser)]
#[command(
    name = "relqm",
    version,
    about = "Few-body mass spectra, multichannel scattering, cluster diagnostics, and symmetry-algebra checks on momentum grids"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
    /// TOML configuration file (required)
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// output directory (overrides the configuration's out_dir)
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// random seed (overrides the configuration)
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// radial node count (overrides grid.n)
    #[arg(long = "grid-n", global = true, value_name = "N")]
    grid_n: Option<usize>,
    /// angular cutoff of the gridded representation (overrides
    /// partial_waves.l_max; used by rep-check)
    #[arg(long, global = true, value_name = "J")]
    jmax: Option<i32>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Solve the configured mass operator and tabulate its spectrum
    Spectrum,
    /// Scan on-shell S-matrix elements over the configured energy window
    Scatter,
    /// Measure cluster-limit deviations of the embedded interactions
    ClusterCheck,
    /// Check the Poincare commutator table and the group law
    RepCheck,
    /// Execute the task named by the configuration's `task` key
    Run,
}

fn effective_config(cli: &Cli) -> Result<RunConfig, config::ConfigError> {
    let path = cli.config.as_ref().ok_or_else(|| {
        config::ConfigError("--config PATH is required".into())
    })?;
    let mut cfg = RunConfig::load(path)?;
    if let Some(out) = &cli.out {
        cfg.out_dir = out.display().to_string();
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(n) = cli.grid_n {
        cfg.grid.n = n;
    }
    if let Some(j) = cli.jmax {
        cfg.partial_waves.l_max = j;
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<(), TaskError> {
    let cfg = effective_config(cli)?;
    let resolved = cfg.validate()?;
    let task = match &cli.cmd {
        Cmd::Spectrum => Task::Spectrum,
        Cmd::Scatter => Task::Scatter,
        Cmd::ClusterCheck => Task::ClusterCheck,
        Cmd::RepCheck => Task::RepCheck,
        Cmd::Run => cfg.task.ok_or_else(|| {
            config::ConfigError(
                "the run verb needs a `task` key in the configuration".into(),
            )
        })?,
    };
    let out_dir = PathBuf::from(&cfg.out_dir);
    match task {
        Task::Spectrum => tasks::cmd_spectrum(&cfg, &resolved, &out_dir)?,
        Task::Scatter => tasks::cmd_scatter(&cfg, &resolved, &out_dir)?,
        Task::ClusterCheck => tasks::cmd_cluster_check(&cfg, &resolved, &out_dir)?,
        Task::RepCheck => tasks::cmd_rep_check(&cfg, &resolved, &out_dir)?,
    }
    println!(
        "{task}: wrote artifacts and run_manifest.json to {}",
        out_dir.display()
    );
    Ok(())
}

/// Report the error on stderr and return the documented exit code:
/// 2 for configuration and i/o problems, 3 for numerical diagnostic
/// failures (whose artifacts have already been written).
fn report(err: &TaskError) -> u8 {
    match err {
        TaskError::Config(e) => {
            eprintln!("{e}");
            2
        }
        TaskError::Io(e) => {
            eprintln!("i/o error: {e}");
            2
        }
        TaskError::Numerical(msg) => {
            eprintln!("numerical diagnostic failure: {msg}");
            3
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => ExitCode::from(report(&e)),
    }
}
