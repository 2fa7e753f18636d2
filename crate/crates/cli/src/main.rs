mod args;
mod commands;
mod config;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;
use mhe::MheError;

use args::{Cli, Command};

/// Invalid invocation detected outside clap.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UsageError(pub String);

/// A checked property did not hold.
#[derive(Debug, thiserror::Error)]
#[error("property check failed: {0}")]
pub struct PropertyFailure(pub String);

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<PropertyFailure>() {
            return 3;
        }
        if cause.is::<std::io::Error>() || matches!(cause.downcast_ref::<MheError>(), Some(MheError::Io(_))) {
            return 2;
        }
    }
    1
}

fn run(cli: &Cli) -> anyhow::Result<()> {
    match &cli.command {
        Command::Plan(a) => commands::plan(a),
        Command::Train(a) => commands::train_cmd(a),
        Command::Predict(a) => commands::predict(a),
        Command::Eval(a) => commands::eval(a),
        Command::OracleCheck(a) => commands::oracle_check(a),
        Command::Theory(a) => commands::theory(a),
    }
}

fn main() -> ExitCode {
    let argv = match config::merge_config(std::env::args_os().collect()) {
        Ok(argv) => argv,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(exit_code(&e));
        }
    };
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_follow_the_error_kind() {
        let io: anyhow::Error = MheError::Io(std::io::Error::other("gone")).into();
        assert_eq!(exit_code(&io), 2);
        let wrapped = anyhow::Error::new(std::io::Error::other("gone")).context("writing out");
        assert_eq!(exit_code(&wrapped), 2);
        assert_eq!(exit_code(&PropertyFailure("x".into()).into()), 3);
        assert_eq!(exit_code(&MheError::Plan("x".into()).into()), 1);
        assert_eq!(exit_code(&UsageError("x".into()).into()), 1);
    }
}
