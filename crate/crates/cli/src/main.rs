//! `plasmosense` batch front end.
//!
//! Exit codes: 0 success, 1 configuration error, 2 computation or
//! precondition error, 3 validation failure.

mod commands;
mod config;
mod report;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use report::{Format, RunManifest};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("computation error: {0}")]
    Compute(#[from] plasmosense::Error),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("validation failed: {}", .0.join("; "))]
    Validation(Vec<String>),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 1,
            CliError::Compute(_) | CliError::Io(_) => 2,
            CliError::Validation(_) => 3,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "plasmosense",
    version,
    about = "Quantum-enhanced plasmonic sensing simulations"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Scenario file (TOML). Defaults to the built-in reference setup.
    #[arg(long, global = true, value_name = "PATH", conflicts_with = "manifest")]
    config: Option<PathBuf>,

    /// Re-run the configuration and seed embedded in a JSON report.
    #[arg(long, global = true, value_name = "REPORT")]
    manifest: Option<PathBuf>,

    /// Override one configuration value, e.g. `--set probe.post_sensor_power_uw=140`.
    /// Applied after the file, in the order given.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,

    /// Directory for the JSON report and CSV traces.
    #[arg(long, global = true, env = "PLASMOSENSE_OUT_DIR", value_name = "DIR")]
    out: Option<PathBuf>,

    /// Seed for randomized commands.
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[arg(long, global = true, value_enum, default_value = "text")]
    format: Format,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Order-of-magnitude sensitivity of a coherent probe.
    Budget,
    /// Residual squeezing after losses and the resulting enhancement.
    Squeezing,
    /// Index-ramp experiment and sensitivity extraction.
    Ramp,
    /// Drive voltage to index-change calibration table.
    Calibrate,
    /// Monte Carlo cross-check of the analytic pipeline.
    Validate,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Budget => "budget",
            Command::Squeezing => "squeezing",
            Command::Ramp => "ramp",
            Command::Calibrate => "calibrate",
            Command::Validate => "validate",
        }
    }

    fn randomized(self) -> bool {
        matches!(self, Command::Ramp | Command::Validate)
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let command = cli.command;
    let (mut cfg, manifest_seed) = match &cli.manifest {
        Some(path) => {
            let m = RunManifest::from_report(path)?;
            if m.command != command.name() {
                return Err(CliError::Config(format!(
                    "{} was produced by `{}`, not `{}`",
                    path.display(),
                    m.command,
                    command.name()
                )));
            }
            (m.config, m.seed)
        }
        None => (config::load(cli.config.as_deref())?, None),
    };
    for o in &cli.overrides {
        config::apply_override(&mut cfg, o)?;
    }
    let seed = match (cli.seed, manifest_seed) {
        (Some(a), Some(b)) if a != b => {
            return Err(CliError::Config(format!(
                "--seed {a} conflicts with the manifest seed {b}"
            )))
        }
        (a, b) => a.or(b),
    };
    let seed = seed.filter(|_| command.randomized());

    let mut failures = Vec::new();
    let output = match command {
        Command::Budget => commands::budget(&cfg)?,
        Command::Squeezing => commands::squeezing(&cfg)?,
        Command::Ramp => commands::ramp(&cfg, seed)?,
        Command::Calibrate => commands::calibrate(&cfg)?,
        Command::Validate => {
            let (out, f) = commands::validate(&cfg, seed)?;
            failures = f;
            out
        }
    };
    let manifest = RunManifest::new(command.name(), seed, cfg);
    if let Some(dir) = &cli.out {
        report::write_outputs(dir, &manifest, &output)?;
    }
    let bytes = report::render_stdout(cli.format, &manifest, &output)?;
    std::io::stdout()
        .write_all(&bytes)
        .map_err(|e| CliError::Io(e.to_string()))?;
    if failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::Validation(
            failures.into_iter().map(|f| f.check).collect(),
        ))
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("plasmosense: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
