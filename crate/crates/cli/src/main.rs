//! `activeslice`: generate synthetic data, run and compare discovery
//! experiments, and serve the annotation API.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "activeslice", version, about = "Active slice discovery experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic dataset as an SLFX bundle.
    Generate(GenerateArgs),
    /// Run discovery with a simulated oracle and write the result.
    Run(RunArgs),
    /// Run a grid of configurations over several seeds and write a report.
    Compare(RunArgs),
    /// Serve the annotation API for interactive sessions.
    Serve(ServeArgs),
}

#[derive(Args)]
pub struct GenerateArgs {
    /// JSON file with a synthetic dataset description; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub d: Option<usize>,
    /// Number of slices.
    #[arg(long)]
    pub k: Option<usize>,
    /// Prevalence of every slice.
    #[arg(long)]
    pub prevalence: Option<f64>,
    /// Distance of each slice cluster from the background, in spreads.
    #[arg(long)]
    pub separation: Option<f64>,
    #[arg(long)]
    pub spread: Option<f64>,
    /// Probability of flipping each membership bit.
    #[arg(long)]
    pub noise: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory for the bundle.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct RunArgs {
    /// Experiment file.
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory (overrides the experiment file).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Discovery seed(s) (override the experiment file).
    #[arg(long = "seed", num_args = 1..)]
    pub seeds: Vec<u64>,
    /// Runs executed in parallel.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Args)]
pub struct ServeArgs {
    /// Experiment file providing the dataset and default session settings.
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    #[arg(long, default_value_t = 8787)]
    pub port: u16,
    /// Where session logs live.
    #[arg(long)]
    pub state_dir: Option<PathBuf>,
    /// Serve this directory under `/` instead of the built-in page.
    #[arg(long)]
    pub static_dir: Option<PathBuf>,
}

/// Failure classes mapped to exit codes.
pub enum Failure {
    /// Bad flags or configuration: exit 2.
    Usage(anyhow::Error),
    /// Everything else: exit 1.
    Runtime(anyhow::Error),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Generate(a) => commands::generate(&a),
        Command::Run(a) => commands::run(&a),
        Command::Compare(a) => commands::compare(&a),
        Command::Serve(a) => commands::serve(&a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
