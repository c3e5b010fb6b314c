//! Config-driven experiment runner.
//!
//! A config is a TOML document; see the crate README for the grammar.

pub mod config;
pub mod presets;
pub mod runner;

pub use config::{BuiltModel, ExperimentConfig, ModelSpec, DIAGNOSTICS};
pub use presets::{Preset, PRESETS};
pub use runner::{run, run_in, simulate, simulate_in, DiagnosticOutcome, RunReport, Status};
