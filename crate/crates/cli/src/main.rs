//! `polygam` command-line front end.
//!
//! Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric
//! failure. `PB_THREADS` caps the worker pool.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "polygam", version, about = "Boosted piecewise-polynomial GAMs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a model from an INI config; writes model, log, metrics and the
    /// resolved config into the configured output directory.
    Train {
        #[arg(short, long)]
        config: PathBuf,
    },
    /// Write raw and linked predictions for every row of a CSV file.
    Predict {
        #[arg(short, long)]
        model: PathBuf,
        #[arg(short, long)]
        data: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Export shape functions as CSV tables and SVG plots.
    Explain {
        #[arg(short, long)]
        model: PathBuf,
        /// Comma-separated feature names; all features when omitted.
        #[arg(long, value_delimiter = ',')]
        features: Vec<String>,
        #[arg(long, default_value_t = polygam::explain::DEFAULT_GRID_POINTS)]
        grid: usize,
        /// Add 95% confidence bands.
        #[arg(long)]
        ci: bool,
        #[arg(short, long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Err(e) = commands::init_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    let result = match cli.command {
        Command::Train { config } => commands::train(&config),
        Command::Predict { model, data, out } => commands::predict(&model, &data, &out),
        Command::Explain {
            model,
            features,
            grid,
            ci,
            out,
        } => commands::explain(&model, &features, grid, ci, &out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
