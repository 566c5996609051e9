//! Command implementations behind the `wig` binary.

pub mod args;
mod commands;
mod setup;

use std::fmt;

pub use args::{Cli, Command};

/// A certification command ran to completion but a bound was violated.
#[derive(Debug)]
pub struct CertificationFailure(pub String);

impl fmt::Display for CertificationFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "certification failed: {}", self.0)
    }
}

impl std::error::Error for CertificationFailure {}

pub const EXIT_OK: u8 = 0;
pub const EXIT_ERROR: u8 = 1;
pub const EXIT_CERTIFICATION: u8 = 2;

/// Maps a command error to the process exit status.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<CertificationFailure>().is_some() {
        EXIT_CERTIFICATION
    } else {
        EXIT_ERROR
    }
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::PlotActivation(a) => commands::plot::run(&a),
        Command::GradCheck(a) => commands::gradcheck::run(&a),
        Command::EquivCheck(a) => commands::equiv::run(&a),
        Command::TrainClassify(a) => commands::train::classify(&a),
        Command::TrainDenoise(a) => commands::train::denoise(&a),
        Command::EvalClassify(a) => commands::eval::run(&a),
        Command::DenoiseImage(a) => commands::denoise::run(&a),
    }
}
