mod args;
mod commands;
mod error;
mod manifest;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;

use args::{Cli, Command};
use error::{CliError, CliResult};

fn configure_threads(flag: Option<usize>) -> CliResult<()> {
    let threads = match std::env::var("GHP_THREADS") {
        Ok(v) => Some(v.parse::<usize>().map_err(|_| CliError::usage(format!("GHP_THREADS must be an integer, got `{v}`")))?),
        Err(_) => flag,
    };
    if let Some(n) = threads {
        if n == 0 {
            return Err(CliError::usage("thread count must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::usage(e.to_string()))?;
    }
    Ok(())
}

fn run(cli: Cli) -> CliResult<()> {
    configure_threads(cli.threads)?;
    match &cli.command {
        Command::Init(a) => commands::init(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::Learn(a) => commands::learn(a),
        Command::Distance(a) => commands::distance(a),
        Command::Eval(c) => commands::eval(c),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let err = CliError::usage(e.render().to_string().trim_end());
            eprintln!("{}", err.to_json());
            return ExitCode::from(err.kind.exit_code() as u8);
        }
    };
    let level = if cli.quiet { log::LevelFilter::Warn } else { log::LevelFilter::Info };
    env_logger::Builder::new().filter_level(level).format_timestamp(None).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("{}", err.to_json());
            ExitCode::from(err.kind.exit_code() as u8)
        }
    }
}
