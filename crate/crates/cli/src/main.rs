use affbench_cli::config::RunConfig;
use affbench_cli::stages::{run_stage, Stage};
use affbench_cli::{config_err, RunError};
use clap::{Parser, Subcommand};
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "affbench",
    version,
    about = "Low-similarity benchmarking pipeline for protein-ligand affinity models"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse structures, strip waters/buffers, complete hydrogens.
    Prepare(StageArgs),
    /// Ligand fingerprints and protein/ligand similarity blocks.
    Similarity(StageArgs),
    /// Build the fraction/fold split plans.
    Split(StageArgs),
    /// UniProt overlap audit of every split plan.
    Audit(StageArgs),
    /// Export descriptor, contact and shell feature matrices as CSV.
    Featurize(StageArgs),
    /// Train the model roster (or one model) and predict the test sets.
    Train(TrainArgs),
    /// Overall and per-protein metrics for every prediction file.
    Evaluate(StageArgs),
    /// Aggregate metrics into plot data (fraction vs mean±sd R²).
    Report(StageArgs),
}

#[derive(clap::Args)]
struct StageArgs {
    /// Run configuration (TOML; JSON accepted).
    #[arg(long)]
    config: PathBuf,
}

#[derive(clap::Args)]
struct TrainArgs {
    #[arg(long)]
    config: PathBuf,
    /// Train only this model (default: the whole configured roster).
    #[arg(long)]
    model: Option<String>,
}

fn main() {
    if let Err(e) = try_main() {
        eprintln!("{}", e.to_json_line());
        std::process::exit(e.exit_code());
    }
}

fn try_main() -> Result<(), RunError> {
    if let Ok(threads) = std::env::var("AFFBENCH_THREADS") {
        let n: usize = threads
            .parse()
            .map_err(|_| config_err(format!("AFFBENCH_THREADS={threads} is not a number")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| config_err(format!("thread pool: {e}")))?;
    }

    let cli = Cli::parse();
    let (stage, config_path, model) = match &cli.command {
        Command::Prepare(a) => (Stage::Prepare, &a.config, None),
        Command::Similarity(a) => (Stage::Similarity, &a.config, None),
        Command::Split(a) => (Stage::Split, &a.config, None),
        Command::Audit(a) => (Stage::Audit, &a.config, None),
        Command::Featurize(a) => (Stage::Featurize, &a.config, None),
        Command::Train(a) => (Stage::Train, &a.config, a.model.as_deref()),
        Command::Evaluate(a) => (Stage::Evaluate, &a.config, None),
        Command::Report(a) => (Stage::Report, &a.config, None),
    };
    let config = RunConfig::load(config_path)?;
    run_stage(stage, &config, model)
}
