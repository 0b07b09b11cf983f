mod commands;
mod failure;
mod names;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// Spike-time knowledge graph embeddings: train, evaluate and inspect models.
#[derive(Debug, Parser)]
#[command(name = "spike-embed", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train one model per seed and write checkpoints, logs and the effective config.
    Train(Box<TrainArgs>),
    /// Filtered MRR and hits@k for one or more checkpoints.
    Evaluate(EvaluateArgs),
    /// Sort candidate objects of a subject/relation pair from least to most plausible.
    RankEvents(RankEventsArgs),
    /// Spike raster and temporal score trace of a single triple.
    Inspect(InspectArgs),
    /// Seeded train/test split of a triple file.
    Split(SplitArgs),
    /// Plain-text dump of a checkpoint.
    Export(ExportArgs),
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Training triples (subject<TAB>predicate<TAB>object).
    #[arg(long)]
    pub train: PathBuf,
    /// Held-out triples; used for filtering and stored in the vocabulary.
    #[arg(long)]
    pub test: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// key=value file; command-line flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Number of runs; run k uses seed + k.
    #[arg(long, default_value_t = 1)]
    pub seeds: usize,
    /// Write measured wall time to the log instead of 0.
    #[arg(long)]
    pub wall_time: bool,
    #[command(flatten)]
    pub hyper: HyperFlags,
}

#[derive(Debug, Args, Default)]
pub struct HyperFlags {
    /// spike, spike-s, transe or transe-s.
    #[arg(long)]
    pub model: Option<String>,
    /// shared or separate.
    #[arg(long)]
    pub population_mode: Option<String>,
    #[arg(long)]
    pub dim: Option<usize>,
    /// Stimulus neurons M.
    #[arg(long)]
    pub stim: Option<usize>,
    #[arg(long, allow_negative_numbers = true)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub lr_drop_epoch: Option<usize>,
    #[arg(long)]
    pub lr_after: Option<f64>,
    #[arg(long)]
    pub batch: Option<usize>,
    /// Subject and object corruptions per positive.
    #[arg(long, num_args = 2, value_names = ["SUBJ", "OBJ"])]
    pub neg: Option<Vec<usize>>,
    #[arg(long)]
    pub l2: Option<f64>,
    #[arg(long)]
    pub tau_s: Option<f64>,
    #[arg(long)]
    pub u_th: Option<f64>,
    /// Stimulus window.
    #[arg(long, num_args = 2, value_names = ["T0", "TMAX"], allow_negative_numbers = true)]
    pub window: Option<Vec<f64>>,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub freeze_relations: bool,
    #[arg(long)]
    pub freeze_entities: bool,
    /// Add <e, #isIdenticalTo, e> triples (needs --population-mode separate).
    #[arg(long)]
    pub align: bool,
    #[arg(long, allow_negative_numbers = true)]
    pub weight_init_mean: Option<f64>,
    #[arg(long)]
    pub weight_init_std: Option<f64>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Checkpoint files or training output directories.
    #[arg(long, num_args = 1.., required = true)]
    pub checkpoint: Vec<PathBuf>,
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub test: Option<PathBuf>,
    /// Splits to report; defaults to every split with data.
    #[arg(long, num_args = 1..)]
    pub splits: Vec<String>,
    #[arg(long, num_args = 1.., default_values_t = [1usize, 3, 10])]
    pub hits: Vec<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RankEventsArgs {
    #[arg(long, num_args = 1.., required = true)]
    pub checkpoint: Vec<PathBuf>,
    #[arg(long)]
    pub subject: String,
    #[arg(long)]
    pub relation: String,
    /// One entity name per line.
    #[arg(long)]
    pub candidates: PathBuf,
    /// Output CSV file.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, num_args = 3, value_names = ["SUBJECT", "RELATION", "OBJECT"])]
    pub triple: Vec<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 0.8)]
    pub ratio: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Defaults to standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(a) => commands::train(*a),
        Command::Evaluate(a) => commands::evaluate(a),
        Command::RankEvents(a) => commands::rank_events(a),
        Command::Inspect(a) => commands::inspect(a),
        Command::Split(a) => commands::split(a),
        Command::Export(a) => commands::export(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
