mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use archshape::geometry::MeshFormat;
use archshape::saliency::{Axis, ImportanceMode, Score, TargetSource};
use archshape::{FillMode, Label};
use clap::{Args, Parser, Subcommand};

use commands::{Channels, Counts, SliceSpec};

#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;

/// Voxel form classification: synthetic data, 3D CNN training, evaluation and saliency maps.
///
/// Every option can also be set in a `--config` file as `key=value` (key = the
/// long flag name without dashes, `#` comments). Flags override the file, the
/// file overrides defaults. Exit status: 0 success, 1 argument or domain error,
/// 2 I/O error.
#[derive(Parser, Debug)]
#[command(name = "archshape", version, about, long_about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Mesh (OBJ / STL) to VXG1 occupancy grid.
    Voxelize(VoxelizeArgs),
    /// Seeded synthetic human/machine dataset plus manifest.tsv.
    GenData(GenDataArgs),
    /// Train the classifier on a generated dataset.
    Train(TrainArgs),
    /// Confusion matrix, accuracy, precision and recall on a split.
    Eval(EvalArgs),
    /// Input-gradient saliency map of one grid.
    Saliency(SaliencyArgs),
}

#[derive(Args, Debug)]
pub struct VoxelizeArgs {
    /// key=value file; keys: in, out, res, fill, format
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Input mesh (.obj or .stl)
    #[arg(long = "in")]
    pub input: Option<PathBuf>,
    /// Output VXG1 file
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Grid edge length, >= 2 [default: 32]
    #[arg(long)]
    pub res: Option<usize>,
    /// surface | solid [default: solid]
    #[arg(long)]
    pub fill: Option<FillMode>,
    /// obj | stl-ascii | stl-binary [default: from the extension]
    #[arg(long)]
    pub format: Option<MeshFormat>,
}

#[derive(Args, Debug)]
pub struct GenDataArgs {
    /// key=value file; keys: out, train, val, test, res, seed
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Training samples per class, >= 1
    #[arg(long)]
    pub train: Option<usize>,
    /// Validation samples per class [default: 0]
    #[arg(long)]
    pub val: Option<usize>,
    /// Test samples per class, >= 1
    #[arg(long)]
    pub test: Option<usize>,
    /// Grid edge length [default: 32]
    #[arg(long)]
    pub res: Option<usize>,
    /// Master seed (required)
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// key=value file; keys: data, out, log, epochs, lr, momentum, batch, seed, channels, shuffle
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Dataset directory containing manifest.tsv
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Output ASN1 checkpoint
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Training log CSV [default: checkpoint path with extension .csv]
    #[arg(long)]
    pub log: Option<PathBuf>,
    /// [default: 60]
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Learning rate [default: 0.01]
    #[arg(long)]
    pub lr: Option<f64>,
    /// [default: 0.9]
    #[arg(long)]
    pub momentum: Option<f64>,
    /// Mini-batch size [default: 8]
    #[arg(long)]
    pub batch: Option<usize>,
    /// Seed for weight init and shuffling (required)
    #[arg(long)]
    pub seed: Option<u64>,
    /// Conv block widths, comma-separated [default: 8,16,32,64]
    #[arg(long)]
    pub channels: Option<Channels>,
    /// Reshuffle every epoch: true | false [default: true]
    #[arg(long)]
    pub shuffle: Option<bool>,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// key=value file; keys: model, data, split, out, positive, matrix
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// ASN1 checkpoint
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Dataset directory containing manifest.tsv
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// train | val | test [default: test]
    #[arg(long)]
    pub split: Option<archshape::datagen::Split>,
    /// Report CSV [default: checkpoint path with extension .report.csv]
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Positive class for precision and recall [default: machine]
    #[arg(long)]
    pub positive: Option<Label>,
    /// Score given counts instead of a model: human_human,human_machine,machine_human,machine_machine
    #[arg(long)]
    pub matrix: Option<Counts>,
}

#[derive(Args, Debug)]
pub struct SaliencyArgs {
    /// key=value file; keys: model, in, out, mode, target, label, score, proj, slice, ranks
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// ASN1 checkpoint
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Input VXG1 grid
    #[arg(long = "in")]
    pub input: Option<PathBuf>,
    /// Output prefix [default: input path without extension]
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// abs | square [default: abs]
    #[arg(long)]
    pub mode: Option<ImportanceMode>,
    /// Class to explain: true | pred [default: pred]
    #[arg(long)]
    pub target: Option<TargetSource>,
    /// True label for --target true: h | m
    #[arg(long)]
    pub label: Option<Label>,
    /// Differentiated score: logit | prob [default: logit]
    #[arg(long)]
    pub score: Option<Score>,
    /// Max-projection axis, repeatable: i | j | k
    #[arg(long)]
    pub proj: Vec<Axis>,
    /// Slice as axis=index, repeatable
    #[arg(long)]
    pub slice: Vec<SliceSpec>,
    /// Also write the rank-band grid
    #[arg(long)]
    pub ranks: bool,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Voxelize(a) => commands::voxelize(a),
        Command::GenData(a) => commands::gen_data(a),
        Command::Train(a) => commands::train(a),
        Command::Eval(a) => commands::eval(a),
        Command::Saliency(a) => commands::saliency(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_io() { 2 } else { 1 })
        }
    }
}
