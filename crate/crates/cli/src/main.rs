use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

mod artifacts;
mod commands;
mod config;
mod presets;

use artifacts::{CliError, CliResult, RunContext};
use config::RunConfig;

#[derive(Parser)]
#[command(name = "hybrid-vmc", version, about = "Symmetric-subspace VMC for J1-J2 Heisenberg models")]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Sequential reductions; outputs are byte-reproducible apart from manifest timestamps.
    #[arg(long, global = true)]
    deterministic: bool,
    /// Overrides every seed in the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (overrides `io.out_dir`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Ground energy of the configured sector by exact diagonalization.
    Ed,
    /// Block isometry from the reference system's reduced density matrix.
    Isometry,
    /// Variational optimization over the configured bond dimensions.
    Optimize,
    /// Chi-square test of the direct sampler against exhaustive |phi|^2.
    SampleAudit,
    /// Linear fit of E against 1/D through the three largest D.
    Extrapolate {
        /// CSV with columns D and energy.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// End-to-end recipe: ED, isometry, bond-dimension ladder, extrapolation.
    Bench {
        /// Built-in recipe used when no --config is given.
        #[arg(long)]
        preset: Option<String>,
    },
}

fn load_config(cli: &Cli, preset: Option<&presets::Preset>) -> CliResult<RunConfig> {
    let mut cfg = match (&cli.config, preset) {
        (Some(path), _) => {
            if !path.exists() {
                return Err(CliError::Missing(format!("config {} not found", path.display())));
            }
            RunConfig::load(path).map_err(CliError::Config)?
        }
        (None, Some(p)) => RunConfig::from_toml(p.toml).map_err(CliError::Config)?,
        (None, None) => return Err(CliError::Config("--config is required".into())),
    };
    if let Some(s) = cli.seed {
        cfg.override_seed(s);
    }
    if let Some(out) = &cli.out {
        cfg.io.out_dir = out.clone();
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> CliResult<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(e.to_string()))?;
    }
    let ctx = RunContext {
        threads: cli.threads,
        deterministic: cli.deterministic,
    };
    match &cli.command {
        Command::Ed => commands::cmd_ed(&load_config(cli, None)?, &ctx).map(drop),
        Command::Isometry => commands::cmd_isometry(&load_config(cli, None)?, &ctx).map(drop),
        Command::Optimize => commands::cmd_optimize(&load_config(cli, None)?, &ctx).map(drop),
        Command::SampleAudit => commands::cmd_sample_audit(&load_config(cli, None)?, &ctx).map(drop),
        Command::Extrapolate { input } => {
            let cfg = match &cli.config {
                Some(_) => Some(load_config(cli, None)?),
                None => None,
            };
            let out = cli
                .out
                .clone()
                .or_else(|| cfg.as_ref().map(|c| c.io.out_dir.clone()))
                .unwrap_or_else(|| PathBuf::from("out"));
            commands::cmd_extrapolate(cfg.as_ref(), input.as_deref(), &out, &ctx).map(drop)
        }
        Command::Bench { preset } => {
            let p = match preset {
                Some(name) => Some(presets::find(name).ok_or_else(|| {
                    CliError::Config(format!("unknown preset {name:?}; available: {}", presets::names().join(", ")))
                })?),
                None if cli.config.is_none() => presets::find("desk16"),
                None => None,
            };
            let cfg = load_config(cli, p)?;
            commands::cmd_bench(&cfg, p.map(|p| p.name), p.map(|p| p.target), &ctx)
        }
    }
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
