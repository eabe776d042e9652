//! `virtstain`: synthetic data, training, tiled inference and evaluation.

mod args;
mod cmd;
mod util;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};
use util::CliError;

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Synth(a) => cmd::synth::run(a),
        Command::Train(a) => cmd::train::run(a),
        Command::Infer(a) => cmd::infer::run(a),
        Command::CollectStats(a) => cmd::infer::collect_stats(a),
        Command::Eval(a) => cmd::eval::run(a),
        Command::Seam(a) => cmd::tools::seam(a),
        Command::Rf(a) => cmd::tools::rf(a),
        Command::Gradcheck(a) => cmd::tools::gradcheck(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
