//! Command-line front end: synthetic data generation, training, evaluation,
//! experiments and checkpoint inspection.
//!
//! Exit codes: 0 on success, 1 for usage errors, 2 for runtime failures.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use quatrefine::eval::ReportFormat;

#[derive(Parser, Debug)]
#[command(
    name = "quatrefine",
    version,
    about = "Refine coarse object orientations from bounding-box crops"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Render a synthetic cuboid dataset.
    GenData(GenDataArgs),
    /// Train a refiner and write its checkpoint.
    Train(TrainArgs),
    /// Evaluate a checkpoint or a reference model on a dataset split.
    Eval(EvalArgs),
    /// Run a training-size, noise-distribution or resampling experiment.
    Experiment(ExperimentArgs),
    /// Print the entries and metadata of a checkpoint.
    InspectCheckpoint(InspectArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Format {
    Table,
    Kv,
}

impl From<Format> for ReportFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Table => ReportFormat::Table,
            Format::Kv => ReportFormat::KeyValue,
        }
    }
}

#[derive(Args, Debug)]
struct GenDataArgs {
    /// Number of frames to render.
    #[arg(long)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output dataset directory.
    #[arg(long)]
    out: PathBuf,
    /// Frame side length in pixels.
    #[arg(long, default_value_t = 96)]
    frame_size: u32,
    /// Largest angle between a pose and the base orientation, degrees.
    #[arg(long)]
    spread: Option<f64>,
}

#[derive(Args, Debug, Clone)]
struct DataArgs {
    /// Dataset directory.
    #[arg(long)]
    data: PathBuf,
    /// Train, validation and test counts.
    #[arg(long, default_value = "2000,500,500", value_parser = parse_counts)]
    split: (usize, usize, usize),
    #[arg(long, default_value_t = 0)]
    split_seed: u64,
}

/// Training options. Unset flags fall back to `--config`, then to defaults.
#[derive(Args, Debug, Clone)]
struct TrainOpts {
    /// `key = value` training configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    epochs_mse: Option<usize>,
    #[arg(long)]
    epochs_geo: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    /// Training noise, `uniform:LO:HI` or `normal:MEAN:SD` in degrees.
    #[arg(long)]
    noise: Option<String>,
    #[arg(long)]
    noise_seed: Option<u64>,
    /// Shuffle seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Assemble batches on the training thread (bit-reproducible).
    #[arg(long, action = clap::ArgAction::Set)]
    deterministic: Option<bool>,
    /// Network initialization seed.
    #[arg(long, default_value_t = 0)]
    network_seed: u64,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    opts: TrainOpts,
    /// Fine-tune from this checkpoint instead of a fresh network.
    #[arg(long)]
    init: Option<PathBuf>,
    /// Checkpoint output path.
    #[arg(long)]
    out: PathBuf,
    /// Also write the per-epoch metrics log here.
    #[arg(long)]
    metrics: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Kv)]
    format: Format,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModelKind {
    /// Predicts no correction.
    Identity,
    /// Test double returning the true correction.
    Oracle,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Subset {
    Train,
    Val,
    Test,
    All,
}

#[derive(Args, Debug, Clone)]
struct EvalNoiseArgs {
    /// Test noise, `uniform:LO:HI` or `normal:MEAN:SD` in degrees.
    #[arg(long, default_value = "uniform:0:30")]
    eval_noise: String,
    #[arg(long, default_value_t = 1)]
    eval_seed: u64,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Trained checkpoint to evaluate.
    #[arg(long, conflicts_with = "model", required_unless_present = "model")]
    checkpoint: Option<PathBuf>,
    /// Reference model to evaluate instead of a checkpoint.
    #[arg(long, value_enum)]
    model: Option<ModelKind>,
    #[arg(long, value_enum, default_value_t = Subset::Test)]
    subset: Subset,
    #[command(flatten)]
    noise: EvalNoiseArgs,
    /// Independent noise draws per image.
    #[arg(long, default_value_t = 1)]
    resample: usize,
    #[arg(long, value_enum, default_value_t = Format::Table)]
    format: Format,
    /// Print model wall-clock time per inference to stderr.
    #[arg(long)]
    time: bool,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ExperimentKind {
    TrainingSize,
    NoiseDistribution,
    Resampling,
}

#[derive(Args, Debug)]
struct ExperimentArgs {
    #[arg(long, value_enum)]
    kind: ExperimentKind,
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    opts: TrainOpts,
    #[command(flatten)]
    noise: EvalNoiseArgs,
    /// Evaluate this checkpoint instead of training one (noise-distribution
    /// without --retrain, resampling).
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Training-set sizes for the training-size experiment.
    #[arg(long, value_delimiter = ',', default_values_t = [500usize, 2000])]
    sizes: Vec<usize>,
    /// Noise distributions for the noise-distribution experiment.
    #[arg(long, value_delimiter = ',', default_values = ["uniform:0:30", "normal:30:5", "normal:10:5"])]
    noises: Vec<String>,
    /// Train a fresh model per noise distribution.
    #[arg(long)]
    retrain: bool,
    /// Resample factor for the resampling experiment.
    #[arg(long, default_value_t = 3)]
    k: usize,
    #[arg(long, value_enum, default_value_t = Format::Table)]
    format: Format,
}

#[derive(Args, Debug)]
struct InspectArgs {
    checkpoint: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Table)]
    format: Format,
}

fn parse_counts(s: &str) -> Result<(usize, usize, usize), String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    let n: Vec<usize> = parts
        .iter()
        .map(|p| p.parse::<usize>())
        .collect::<Result<_, _>>()
        .map_err(|_| format!("expected TRAIN,VAL,TEST counts, got {s:?}"))?;
    match n[..] {
        [a, b, c] => Ok((a, b, c)),
        _ => Err(format!("expected TRAIN,VAL,TEST counts, got {s:?}")),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.command {
        Command::GenData(a) => commands::gen_data(a),
        Command::Train(a) => commands::train(a),
        Command::Eval(a) => commands::eval(a),
        Command::Experiment(a) => commands::experiment(a),
        Command::InspectCheckpoint(a) => commands::inspect(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
