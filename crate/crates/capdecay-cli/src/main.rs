//! Command line front end: runs experiment configs into bundles,
//! compares finished bundles, and validates configs.
//!
//! Exit codes: 0 success, 2 config error, 3 stage failure.

use capdecay::error::Result;
use capdecay::runner::{
    bundled_config, compare, list_bundled_examples, run, ExperimentConfig, StageStatus,
};
use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "capdecay",
    version,
    about = "Decay bounds and profile functions for degenerate boundary problems"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment config into an output bundle
    Run {
        /// Config file path, or the name of a bundled example
        #[arg(long)]
        config: String,
        /// Output directory; defaults to the config's own choice, then
        /// to ./<name>-bundle
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the number of ladder rungs
        #[arg(long)]
        rungs: Option<usize>,
        /// Seed for the randomized suites; everything else is
        /// deterministic regardless
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Rung-wise ratio table between two finished bundles
    Compare {
        a: PathBuf,
        b: PathBuf,
        /// Write the table here instead of stdout
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Parse and validate a config without running anything
    ValidateConfig {
        /// Config file path, or the name of a bundled example
        #[arg(long)]
        config: String,
    },
    /// List the example configs compiled into this binary
    ListBundledExamples,
}

fn load_config(spec: &str) -> Result<ExperimentConfig> {
    if list_bundled_examples().contains(&spec) {
        return bundled_config(spec);
    }
    let text = std::fs::read_to_string(spec)?;
    let config: ExperimentConfig = serde_json::from_str(&text)?;
    config.validate()?;
    Ok(config)
}

const CONFIG_ERROR: u8 = 2;
const STAGE_FAILURE: u8 = 3;

fn cmd_run(config: String, out: Option<PathBuf>, rungs: Option<usize>, seed: u64) -> ExitCode {
    let mut config = match load_config(&config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("config error: {e}");
            return ExitCode::from(CONFIG_ERROR);
        }
    };
    if let Some(rungs) = rungs {
        config.ladder.rungs = rungs;
        if let Err(e) = config.validate() {
            eprintln!("config error: {e}");
            return ExitCode::from(CONFIG_ERROR);
        }
    }
    let out_dir = out
        .or_else(|| config.out_dir.clone().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(format!("{}-bundle", config.name)));
    let bundle = match run(&config, &out_dir, seed) {
        Ok(b) => b,
        Err(e) => {
            eprintln!("run failed: {e}");
            return ExitCode::from(STAGE_FAILURE);
        }
    };
    for record in &bundle.manifest.stages {
        match &record.status {
            StageStatus::Completed => {
                if record.outputs.is_empty() {
                    println!("  {:<10} completed", record.stage);
                } else {
                    println!("  {:<10} completed ({})", record.stage, record.outputs.join(", "));
                }
            }
            StageStatus::Skipped { reason } => {
                println!("  {:<10} skipped: {reason}", record.stage);
            }
            StageStatus::Failed { error } => {
                println!("  {:<10} FAILED: {error}", record.stage);
            }
        }
    }
    println!("bundle: {}", out_dir.display());
    if bundle.manifest.is_complete() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(STAGE_FAILURE)
    }
}

fn cmd_compare(a: PathBuf, b: PathBuf, out: Option<PathBuf>) -> ExitCode {
    match compare(&a, &b) {
        Ok(report) => {
            let csv = report.csv();
            match out {
                Some(path) => {
                    if let Err(e) = std::fs::write(&path, csv) {
                        eprintln!("cannot write {}: {e}", path.display());
                        return ExitCode::from(STAGE_FAILURE);
                    }
                    println!("wrote {}", path.display());
                }
                None => print!("{csv}"),
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("compare refused: {e}");
            ExitCode::from(CONFIG_ERROR)
        }
    }
}

fn cmd_validate(config: String) -> ExitCode {
    match load_config(&config) {
        Ok(c) => {
            println!(
                "ok: {} ({} rungs in [{}, {}], {} bound ids)",
                c.name,
                c.ladder.rungs,
                c.ladder.r_min,
                c.ladder.r_max,
                c.theorems.len()
            );
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("config error: {e}");
            ExitCode::from(CONFIG_ERROR)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { config, out, rungs, seed } => cmd_run(config, out, rungs, seed),
        Command::Compare { a, b, out } => cmd_compare(a, b, out),
        Command::ValidateConfig { config } => cmd_validate(config),
        Command::ListBundledExamples => {
            for name in list_bundled_examples() {
                println!("{name}");
            }
            ExitCode::SUCCESS
        }
    }
}
