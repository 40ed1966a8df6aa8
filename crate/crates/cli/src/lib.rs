//! Command-line front end: scenario loading, the four subcommands and the
//! run manifest they leave behind.

pub mod args;
pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;

use args::{Cli, Command};
use error::{CliError, EXIT_NUMERICAL, EXIT_PASS};
use manifest::RunManifest;

/// Runs one parsed command, writes its manifest and returns the exit code.
pub fn run(cli: &Cli) -> Result<u8, CliError> {
    let (manifest, out): (RunManifest, &std::path::Path) = match &cli.command {
        Command::SolveEp(a) => (commands::solve_ep(a)?, &a.out),
        Command::Coeffs(a) => (commands::coeffs(a)?, &a.out),
        Command::Verify(a) => (commands::verify(a)?, &a.scenario.out),
        Command::Figure1(a) => (commands::figure1(a)?, &a.out),
    };
    let path = manifest.finish(out)?;
    for (name, status) in &manifest.checks {
        println!(
            "{name}: {}",
            serde_json::to_value(status)
                .expect("status serialises")
                .as_str()
                .unwrap_or("?")
        );
    }
    println!("manifest: {}", path.display());
    Ok(if manifest.passed() {
        EXIT_PASS
    } else {
        EXIT_NUMERICAL
    })
}
