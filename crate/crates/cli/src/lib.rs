//! Library half of the `owc` command: each subcommand is a plain function so
//! it can be driven from tests.

pub mod args;
pub mod calibrate;
pub mod commands;
mod error;
pub mod manifest;
pub mod output;

pub use error::CliError;

use args::{Cli, Command};

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate(a) => commands::cmd_simulate(&a).map(drop),
        Command::Allocate(a) => commands::cmd_allocate(&a).map(drop),
        Command::Report(a) => commands::cmd_report(&a.out),
        Command::Calibrate(a) => {
            let report = calibrate::cmd_calibrate(&a)?;
            print!("{}", report.text);
            Ok(())
        }
    }
}
