//! Command-line driver for warpgreen: TOML run configurations, command
//! dispatch and JSON/CSV result files.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;
pub mod verify;

pub use commands::{run, Command, Outcome};
pub use config::{parse_config, Format, Overrides, RunConfig, ValidConfig};
pub use error::CliError;
pub use verify::{run_verify, IdentityCheck, VerifyReport};

use std::path::PathBuf;

use warpgreen_core::locator::PerturbTarget;

/// Parses the `--perturb` value.
pub fn locator_target(s: &str) -> Result<PerturbTarget, CliError> {
    s.parse().map_err(|e: warpgreen_core::Error| CliError::config("genericity.perturb", e.to_string()))
}

/// Result of [`execute`]: the output was written even when `failure` is set.
#[derive(Debug)]
pub struct Executed {
    pub summary: String,
    pub written: Vec<PathBuf>,
    pub failure: Option<CliError>,
}

/// Runs a command and writes its result in the configured format.
pub fn execute(command: Command, cfg: &ValidConfig) -> Result<Executed, CliError> {
    let outcome = run(command, cfg)?;
    let path = cfg.config.output.path.as_deref();
    let written = match cfg.format() {
        Format::Json => {
            output::emit_json(path, &outcome.json)?;
            path.map(|p| vec![p.to_path_buf()]).unwrap_or_default()
        }
        Format::Csv => output::emit_csv(path, &outcome.tables)?,
    };
    Ok(Executed { summary: outcome.summary, written, failure: outcome.failure })
}
