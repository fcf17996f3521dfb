//! Command-line front end: scenario files, commands, sweeps and the verification suite.

pub mod aqc;
pub mod commands;
pub mod error;
pub mod report;
pub mod scenario;
pub mod sweep;
pub mod verify;

use std::path::Path;
use std::time::Instant;

use error::Result;
use report::{emit, CommandOutput, RunResult};
use scenario::Scenario;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Command {
    Dress,
    Aqc,
    Green,
    Ggreen,
    KeldyshCheck,
    ClassicalLimit,
    Smatrix,
    InclusiveSmatrix,
    Verify,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Dress => "dress",
            Command::Aqc => "aqc",
            Command::Green => "green",
            Command::Ggreen => "ggreen",
            Command::KeldyshCheck => "keldysh-check",
            Command::ClassicalLimit => "classical-limit",
            Command::Smatrix => "smatrix",
            Command::InclusiveSmatrix => "inclusive-smatrix",
            Command::Verify => "verify",
        }
    }

    pub fn execute(self, s: &Scenario) -> Result<CommandOutput> {
        match self {
            Command::Dress => commands::dress(s),
            Command::Aqc => commands::aqc(s),
            Command::Green => commands::green(s),
            Command::Ggreen => commands::ggreen_cmd(s),
            Command::KeldyshCheck => commands::keldysh_check(s),
            Command::ClassicalLimit => commands::classical_limit(s),
            Command::Smatrix => commands::smatrix(s),
            Command::InclusiveSmatrix => commands::inclusive_smatrix(s),
            Command::Verify => verify::verify(s),
        }
    }
}

/// Executes `command` and writes its outputs into `out`.
pub fn run(command: Command, s: &Scenario, out: &Path) -> Result<RunResult> {
    let start = Instant::now();
    let mut o = command.execute(s)?;
    if let Ok(m) = s.model() {
        o.warnings.extend(m.flags);
    }
    emit(out, s, &o, start.elapsed().as_secs_f64())
}
