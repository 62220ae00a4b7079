mod args;
mod commands;
mod input;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};

fn configure_workers() -> Result<(), String> {
    let Ok(raw) = std::env::var("QFIDKIT_WORKERS") else {
        return Ok(());
    };
    let workers: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| format!("QFIDKIT_WORKERS must be a positive integer, got `{raw}`"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build_global()
        .map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(msg) = configure_workers() {
        eprintln!("error: {msg}");
        return ExitCode::from(2);
    }
    let outcome = match cli.command {
        Command::Check(a) => commands::check(&a),
        Command::CoherentInfo(a) => commands::coherent_info(&a),
        Command::Strip(a) => commands::strip(&a),
        Command::Extract(a) => commands::extract(&a),
        Command::Typical(a) => commands::typical(&a),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
