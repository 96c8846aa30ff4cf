//! `gpstrat` command line front end.
//!
//! Exit codes: 0 success, 1 a verdict failed, 2 usage error, 3 numeric or
//! domain error. With `--format json`, errors are written to stderr as
//! `{"error": ..., "code": ...}`.

mod args;
mod commands;
mod config;
mod emit;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;

use args::{Cli, Format};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Numeric(gpstrat::Error),
    Io(std::io::Error),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Numeric(_) | CliError::Io(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Numeric(e) => write!(f, "{e}"),
            CliError::Io(e) => write!(f, "i/o error: {e}"),
        }
    }
}

impl From<gpstrat::Error> for CliError {
    fn from(e: gpstrat::Error) -> Self {
        CliError::Numeric(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}

fn wants_json(argv: &[String]) -> bool {
    argv.windows(2).any(|w| w[0] == "--format" && w[1] == "json") || argv.iter().any(|a| a == "--format=json")
}

fn report(message: &str, code: u8, json: bool) {
    if json {
        eprintln!("{}", serde_json::json!({ "error": message, "code": code }));
    } else {
        eprintln!("gpstrat: {message}");
    }
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    let json = wants_json(&argv);
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = e.print();
                    ExitCode::SUCCESS
                }
                _ if json => {
                    report(e.to_string().trim(), 2, true);
                    ExitCode::from(2)
                }
                _ => {
                    let _ = e.print();
                    ExitCode::from(2)
                }
            };
        }
    };
    let json = json || cli.command.common().format == Some(Format::Json);
    if let Some(threads) = cli.command.common().threads {
        if threads == 0 {
            report("--threads must be at least 1", 2, json);
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
            report(&e.to_string(), 3, json);
            return ExitCode::from(3);
        }
    }
    match commands::dispatch(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            report(&e.to_string(), e.code(), json);
            ExitCode::from(e.code())
        }
    }
}
