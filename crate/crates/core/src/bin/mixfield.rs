//! Command-line front end of the experiment runner.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mixfield::experiment::{presets::PRESETS, runner, ExperimentConfig};
use mixfield::Error;

#[derive(Parser)]
#[command(name = "mixfield", version, about = "Mixing and ergodicity diagnostics for infinitely divisible fields")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the diagnostics of a config and write the artifact directory.
    Run { config: PathBuf },
    /// List the built-in presets.
    Presets,
    /// Parse and validate a config without running it.
    Validate { config: PathBuf },
    /// Simulate the configured model and store the realization cache.
    Simulate { config: PathBuf },
}

const EXIT_VALIDATION: u8 = 1;
const EXIT_RUNTIME: u8 = 2;

/// Loads a config file, or a preset when the argument names one and no such
/// file exists.
fn load(path: &PathBuf) -> Result<ExperimentConfig, Error> {
    if !path.exists() {
        if let Some(cfg) = path.to_str().and_then(mixfield::experiment::presets::config) {
            return Ok(cfg);
        }
    }
    ExperimentConfig::load(path).map_err(|e| match e {
        Error::Io(m) => Error::Validation {
            field: "config".into(),
            message: m,
        },
        other => other,
    })
}

fn code_of(e: &Error) -> u8 {
    match e {
        Error::Validation { .. } => EXIT_VALIDATION,
        _ => EXIT_RUNTIME,
    }
}

fn fail(e: Error) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(code_of(&e))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Presets => {
            for p in PRESETS {
                println!("{:<16} {} (expected: {})", p.name, p.description, p.expected);
            }
            ExitCode::SUCCESS
        }
        Command::Validate { config } => match load(&config).and_then(|c| c.validate().map(|_| c)) {
            Ok(c) => {
                println!("ok: {}", c.name.as_deref().unwrap_or(&config.display().to_string()));
                ExitCode::SUCCESS
            }
            Err(e) => fail(e),
        },
        Command::Run { config } => {
            let cfg = match load(&config) {
                Ok(c) => c,
                Err(e) => return fail(e),
            };
            match runner::run(&cfg, &config.display().to_string()) {
                Ok(report) => {
                    for o in &report.outcomes {
                        let msg = o.status.message();
                        println!(
                            "{:<16} {:<8} {:<13} {}",
                            o.name,
                            o.status.as_str(),
                            o.verdict.as_deref().unwrap_or("-"),
                            if msg.is_empty() { &o.detail } else { msg }
                        );
                    }
                    println!("artifacts: {}", report.directory.display());
                    ExitCode::from(report.exit_code() as u8)
                }
                Err(e) => fail(e),
            }
        }
        Command::Simulate { config } => {
            let cfg = match load(&config) {
                Ok(c) => c,
                Err(e) => return fail(e),
            };
            match runner::simulate(&cfg, &config.display().to_string()) {
                Ok(report) => {
                    for f in &report.files {
                        println!("{} {}", f.sha256, f.path);
                    }
                    ExitCode::SUCCESS
                }
                Err(e) => fail(e),
            }
        }
    }
}
