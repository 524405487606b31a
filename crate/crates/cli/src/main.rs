mod cmd;
mod common;

use std::panic::{self, AssertUnwindSafe};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use crate::common::CliResult;

/// Remote-sensing VLM data curation and evaluation toolkit.
#[derive(Debug, Parser)]
#[command(name = "geovl", version)]
struct Cli {
    /// Log filter (error, warn, info, debug, trace).
    #[arg(long, global = true, default_value = "warn")]
    log_level: String,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Convert and unify annotation files.
    Convert(cmd::convert::ConvertArgs),
    /// Draw augmented training samples from weighted subsets.
    Sample(cmd::sample::SampleArgs),
    /// Score predictions against ground truth.
    Eval(cmd::eval::EvalArgs),
    /// Split images into overlapping windows, or merge window shards.
    Tile(cmd::tile::TileArgs),
    /// Synthesize zoom-in conversations.
    Zoomgen(cmd::zoomgen::ZoomgenArgs),
}

fn dispatch(cmd: Command) -> CliResult<()> {
    match cmd {
        Command::Convert(a) => cmd::convert::run(a),
        Command::Sample(a) => cmd::sample::run(a),
        Command::Eval(a) => cmd::eval::run(a),
        Command::Tile(a) => cmd::tile::run(a),
        Command::Zoomgen(a) => cmd::zoomgen::run(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            return ExitCode::from(code);
        }
    };
    env_logger::Builder::new().parse_filters(&cli.log_level).init();
    panic::set_hook(Box::new(|info| eprintln!("internal error: {info}")));
    match panic::catch_unwind(AssertUnwindSafe(|| dispatch(cli.command))) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
        Err(_) => ExitCode::from(3),
    }
}
