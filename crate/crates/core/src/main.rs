use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use qdgt::cli::{
    is_runnable, resolve_output_dir, run_experiment, validate_config, write_constants, ExperimentConfig,
    OUTPUT_DIR_ENV,
};
use qdgt::Error;

/// Quantized distributed gradient tracking experiments.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every algorithm in the config and write CSV traces.
    Run { config: PathBuf },
    /// Check a config without running it.
    Validate { config: PathBuf },
    /// Write the constants audit for each Q-DGT entry.
    Constants { config: PathBuf },
}

const EXIT_RUNTIME: u8 = 1;
const EXIT_CONFIG: u8 = 2;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let path = match &cli.command {
        Command::Run { config } | Command::Validate { config } | Command::Constants { config } => config,
    };
    let (cfg, base) = match ExperimentConfig::load(path) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("error: {}: {e}", path.display());
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let out_dir = resolve_output_dir(&cfg, &base, std::env::var_os(OUTPUT_DIR_ENV));
    match cli.command {
        Command::Validate { .. } => {
            let diags = validate_config(&cfg, &base);
            for d in &diags {
                println!("{d}");
            }
            if is_runnable(&diags) {
                println!("ok: {} runnable", cfg.name);
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_CONFIG)
            }
        }
        Command::Constants { .. } => match write_constants(&cfg, &base, &out_dir) {
            Ok(files) => {
                for (label, p) in files {
                    println!("{label}: {}", p.display());
                }
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(EXIT_CONFIG)
            }
        },
        Command::Run { .. } => match run_experiment(&cfg, &base, &out_dir) {
            Ok(outcome) => {
                println!("{:<16} {:>7} {:>12} {:>9} {:>9}", "run", "rounds", "residual", "rate", "sat");
                for s in &outcome.summaries {
                    let rate = s.rate.map_or("-".into(), |r| format!("{r:.5}"));
                    println!(
                        "{:<16} {:>7} {:>12.3e} {:>9} {:>9}",
                        s.label, s.rounds, s.final_residual, rate, s.saturation_events
                    );
                }
                println!("wrote {}", outcome.output_dir.display());
                ExitCode::SUCCESS
            }
            Err(e @ Error::Config(_)) => {
                eprintln!("error: {e}");
                ExitCode::from(EXIT_CONFIG)
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(EXIT_RUNTIME)
            }
        },
    }
}
