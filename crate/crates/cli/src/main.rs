//! `vipose` command-line tool.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.

mod args;
mod commands;
mod config;
mod manifest;

use std::fmt;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Core(vipose::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Core(e) if e.is_data_error() => 2,
            CliError::Core(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage: {m}"),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl From<vipose::Error> for CliError {
    fn from(e: vipose::Error) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(e.into())
    }
}

fn main() -> ExitCode {
    let cli = match args::Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
