mod analyze;
mod args;
mod common;
mod manifest;
mod sensitivity;
mod simulate;

use std::fmt;
use std::path::Path;
use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};
use common::Session;

pub const EXIT_VALIDATION: u8 = 2;
pub const EXIT_RUNTIME: u8 = 3;

/// A command failure and the exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn validation(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_VALIDATION,
            message: message.into(),
        }
    }

    pub fn runtime(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_RUNTIME,
            message: message.into(),
        }
    }

    pub fn input(path: &Path, e: std::io::Error) -> Self {
        Self::validation(format!("cannot read {}: {e}", path.display()))
    }

    pub fn output(path: &Path, e: std::io::Error) -> Self {
        Self::runtime(format!("cannot write {}: {e}", path.display()))
    }
}

impl From<switchjump::Error> for Failure {
    fn from(e: switchjump::Error) -> Self {
        use switchjump::Error::*;
        match e {
            NonFinite { .. } | AllDivergent { .. } => Failure::runtime(e.to_string()),
            _ => Failure::validation(e.to_string()),
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

fn dispatch(command: Command, session: &mut Session) -> Result<(), Failure> {
    match command {
        Command::Simulate(a) => simulate::run(a, session),
        Command::Analyze(a) => analyze::run(a, session),
        Command::Sensitivity(a) => sensitivity::run(a, session),
        Command::Rerun(a) => common::rerun(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command, &mut Session::fresh()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code)
        }
    }
}
