//! `rnnsm`: the command-line pipeline.
//!
//! Exit codes: 0 success, 1 usage, 2 data error, 3 internal. Failures also
//! print a one-line JSON report on standard error.

mod args;
mod commands;
mod error;
mod output;
mod paths;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;

use args::{resolve, Cli, Command};
use error::{CliError, CliResult};

fn run(cli: Cli) -> CliResult<()> {
    let (globals, command) = resolve(cli)?;
    if let Some(n) = globals.workers {
        if n == 0 {
            return Err(CliError::usage("--workers must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::internal(e.to_string()))?;
    }
    let report = match command {
        Command::Extract(a) => commands::extract(a)?,
        Command::Score(a) => commands::score(a)?,
        Command::Coverage(a) => commands::coverage(a)?,
        Command::KsTest(a) => commands::ks_test(a)?,
        Command::TrainPredictor(a) => commands::train_predictor(a)?,
        Command::Predict(a) => match commands::predict(a, globals.format)? {
            Some(r) => r,
            None => return Ok(()),
        },
        Command::Synth(a) => commands::synth(a)?,
        Command::SweepK(a) => commands::sweep_k(a)?,
        Command::Infer(a) => commands::infer(a)?,
    };
    report.emit(globals.format)
}

fn fail(e: &CliError) -> ExitCode {
    eprintln!("{}", e.to_json());
    ExitCode::from(e.kind.exit_code() as u8)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => return fail(&CliError::usage(e.render().to_string().trim_end())),
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(&e),
    }
}
