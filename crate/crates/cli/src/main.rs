//! `stiction`: simulations, orbit continuation and analysis reports for the
//! stiction friction oscillator.

mod analyze;
mod config;
mod orbits;
mod shard;
mod simulate;

use clap::{Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};
use std::io::Write;
use std::path::Path;
use std::process::ExitCode;

use config::{Overrides, RunConfig};

#[derive(Debug, Parser)]
#[command(name = "stiction", version, about = "Stiction friction oscillator toolkit")]
struct Cli {
    #[command(flatten)]
    common: Overrides,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Integrate one trajectory of the discontinuous or regularized system.
    Simulate(simulate::Args),
    /// Solve and continue slip-stick orbits.
    Orbits(orbits::Args),
    /// Folded singularities, canards, transversality and convergence reports.
    Analyze(analyze::Args),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Simulate(_) => "simulate",
            Command::Orbits(_) => "orbits",
            Command::Analyze(_) => "analyze",
        }
    }
}

#[derive(Debug)]
pub enum CliError {
    /// Invalid configuration or unusable output location (exit code 2).
    Config(String),
    /// A module reported a numerical failure (exit code 3).
    Numerical(stiction::Error),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }

    fn to_json(&self) -> Value {
        match self {
            CliError::Config(m) => json!({ "kind": "ConfigError", "message": m }),
            CliError::Numerical(e) => json!({ "kind": error_kind(e), "message": e.to_string() }),
        }
    }
}

impl From<stiction::Error> for CliError {
    fn from(e: stiction::Error) -> Self {
        match e {
            stiction::Error::InvalidParams(m) => CliError::Config(m),
            e => CliError::Numerical(e),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Config(format!("output: {e}"))
    }
}

fn error_kind(e: &stiction::Error) -> String {
    let dbg = format!("{e:?}");
    dbg.split(|c: char| !c.is_alphanumeric()).next().unwrap_or("Error").to_string()
}

/// What a command hands back for the envelope.
pub struct Outcome {
    pub results: Value,
    pub warnings: Vec<String>,
}

pub fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("plain data serializes")
}

pub fn create_file(dir: &Path, name: &str) -> Result<std::io::BufWriter<std::fs::File>, CliError> {
    let path = dir.join(name);
    let f = std::fs::File::create(&path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    Ok(std::io::BufWriter::new(f))
}

fn run(cli: &Cli) -> Result<(RunConfig, Outcome), CliError> {
    let mut cfg = RunConfig::load(cli.common.config.as_deref())?;
    cfg.apply(&cli.common);
    match &cli.command {
        Command::Simulate(a) => a.apply(&mut cfg),
        Command::Orbits(a) => a.apply(&mut cfg),
        Command::Analyze(a) => a.apply(&mut cfg),
    }
    cfg.validate()?;
    std::fs::create_dir_all(&cfg.out).map_err(|e| CliError::Config(format!("{}: {e}", cfg.out.display())))?;
    let outcome = match &cli.command {
        Command::Simulate(a) => simulate::run(a, &cfg)?,
        Command::Orbits(a) => orbits::run(a, &cfg)?,
        Command::Analyze(a) => analyze::run(a, &cfg)?,
    };
    Ok((cfg, outcome))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let command = cli.command.name();
    match run(&cli) {
        Ok((cfg, outcome)) => {
            let envelope = json!({
                "command": command,
                "config": to_value(&cfg),
                "results": outcome.results,
                "warnings": outcome.warnings,
            });
            let text = serde_json::to_string_pretty(&envelope).expect("json");
            if let Err(e) = std::fs::write(cfg.out.join(format!("{command}.json")), format!("{text}\n")) {
                eprintln!("{}", json!({ "command": command, "error": { "kind": "ConfigError", "message": format!("output: {e}") } }));
                return ExitCode::from(2);
            }
            // A closed pipe downstream is not an error of the run.
            let _ = writeln!(std::io::stdout(), "{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            let _ = writeln!(std::io::stderr(), "{}", json!({ "command": command, "error": e.to_json() }));
            ExitCode::from(e.code())
        }
    }
}
