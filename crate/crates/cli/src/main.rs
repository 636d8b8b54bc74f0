mod args;
mod config;
mod error;
mod manifest;
mod replay;
mod run;
mod tools;

use clap::Parser;

use crate::args::{Cli, Command};
use crate::error::CliResult;

fn dispatch(cli: &Cli, argv: &[String]) -> CliResult<()> {
    match &cli.command {
        Command::Deform(a) => run::run(&a.run, &a.tuning, None, argv),
        Command::Edit(a) => run::run(&a.run, &a.tuning, Some(a), argv),
        Command::Morph(a) => tools::cmd_morph(a),
        Command::Metrics(a) => tools::cmd_metrics(a),
        Command::Render(a) => tools::cmd_render(a),
        Command::Config { action } => config::cmd_config(action),
        Command::Replay(a) => replay::cmd_replay(a),
    }
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let argv: Vec<String> = std::env::args().collect();
    let cli = Cli::try_parse_from(&argv).unwrap_or_else(|e| e.exit());
    if let Err(e) = dispatch(&cli, &argv[1..]) {
        eprintln!("error[{}]: {e}", e.kind());
        std::process::exit(e.exit_code());
    }
}
