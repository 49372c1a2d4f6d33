//! Command-line experiments over the trecim simulator.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use serde_json::json;

use crate::commands::Context;
use crate::config::{devices_to_toml, ExperimentConfig, CONFIG_DIR_ENV};
use crate::error::{CliError, CliResult};
use crate::output::{atomic_write, OutputDir, Provenance};

#[derive(Debug, Parser)]
#[command(name = "trecim", version, about = "Compute-in-memory array experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Experiment config (TOML). Relative names are also looked up in
    /// $TRECIM_CONFIG_DIR.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides experiment.seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Overrides experiment.output_dir.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Print the resolved configuration and exit.
    #[arg(long, global = true)]
    pub print_config: bool,
    /// Write the device parameters in use (fitted ones after `calibrate`)
    /// to this file.
    #[arg(long, global = true, value_name = "PATH")]
    pub dump_calibration: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// I_D-V_G curves per threshold level and temperature.
    DeviceSweep,
    /// Cell I-V curves and temperature fluctuation per digit.
    CellSweep,
    /// MAC level sets and noise margin rates.
    Nmr,
    /// Threshold-variation Monte Carlo on a column.
    MonteCarlo,
    /// Network accuracy in ideal, analog or statistical mode.
    Infer,
    /// Energy, latency and area report.
    Energy,
    /// Fit the output transistor to the on/off and on-resistance targets.
    Calibrate,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::DeviceSweep => "device-sweep",
            Command::CellSweep => "cell-sweep",
            Command::Nmr => "nmr",
            Command::MonteCarlo => "monte-carlo",
            Command::Infer => "infer",
            Command::Energy => "energy",
            Command::Calibrate => "calibrate",
        }
    }
}

fn config_dir() -> Option<PathBuf> {
    std::env::var_os(CONFIG_DIR_ENV).filter(|v| !v.is_empty()).map(PathBuf::from)
}

/// Config file named on the command line, else `<command>.toml` in the
/// config directory, else built-in defaults.
pub fn resolve_config(cli: &Cli) -> CliResult<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(p) => {
            let path = match config_dir() {
                Some(dir) if p.is_relative() && !p.exists() && dir.join(p).exists() => dir.join(p),
                _ => p.clone(),
            };
            if !path.is_file() {
                return Err(CliError::usage("--config", format!("file {} does not exist", path.display())));
            }
            ExperimentConfig::load(&path)?
        }
        None => match config_dir().map(|d| d.join(format!("{}.toml", cli.command.name()))) {
            Some(p) if p.is_file() => ExperimentConfig::load(&p)?,
            _ => ExperimentConfig::default(),
        },
    };
    if let Some(seed) = cli.seed {
        cfg.experiment.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.experiment.output_dir = out.clone();
    }
    Ok(cfg)
}

/// Runs a parsed command; returns the JSON summary printed on success.
pub fn execute(cli: &Cli) -> CliResult<serde_json::Value> {
    let cfg = resolve_config(cli)?;
    cfg.validate()?;
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::usage("--threads", "must be at least 1"));
        }
        // A second initialisation in the same process keeps the first pool.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let provenance = Provenance {
        command: cli.command.name().into(),
        config_sha256: cfg.hash(),
        seed: cfg.experiment.seed,
    };
    let mut ctx = Context {
        cfg: &cfg,
        devices: cfg.devices()?,
        out: OutputDir::new(cfg.experiment.output_dir.clone(), provenance),
    };
    match cli.command {
        Command::DeviceSweep => commands::device_sweep(&mut ctx)?,
        Command::CellSweep => commands::cell_sweep(&mut ctx)?,
        Command::Nmr => commands::nmr(&mut ctx)?,
        Command::MonteCarlo => commands::monte_carlo(&mut ctx)?,
        Command::Infer => commands::infer_cmd(&mut ctx)?,
        Command::Energy => commands::energy(&mut ctx)?,
        Command::Calibrate => commands::calibrate(&mut ctx)?,
    }
    let mut outputs: Vec<String> = ctx.out.written().iter().map(|p| p.display().to_string()).collect();
    if let Some(path) = &cli.dump_calibration {
        atomic_write(path, devices_to_toml(&ctx.devices).as_bytes())?;
        outputs.push(path.display().to_string());
    }
    let p = ctx.out.provenance();
    Ok(json!({
        "command": p.command,
        "config_sha256": p.config_sha256,
        "seed": p.seed,
        "outputs": outputs,
    }))
}

/// Entry point shared by the binary and tests: parses, runs, prints, and
/// returns the process exit code.
pub fn run<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return 0;
        }
        Err(e) => {
            let err = CliError::usage("arguments", e.to_string().lines().next().unwrap_or("").trim_start_matches("error: "));
            eprintln!("{}", err.to_json());
            return err.exit_code();
        }
    };
    let result = if cli.print_config {
        resolve_config(&cli).map(|cfg| {
            print!("# config_sha256 = \"{}\"\n{}", cfg.hash(), cfg.to_toml());
        })
    } else {
        execute(&cli).map(|summary| println!("{summary}"))
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", e.to_json());
            e.exit_code()
        }
    }
}
