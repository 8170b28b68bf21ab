//! `hscmt` command-line entry point.
//!
//! Exit codes: 0 success, 1 verification failure, 2 configuration /
//! dataset / checkpoint error, 3 non-finite value during training.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hscmt::Error;

#[derive(Parser, Debug)]
#[command(name = "hscmt", version, about = "Hybrid CNN-transformer image classifier: train, evaluate, inspect")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a model and write checkpoints, history.csv and validation reports.
    Train {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        args: TrainArgs,
    },
    /// Evaluate a checkpoint: confusion.csv, metrics.json, ROC/PR curves.
    Eval {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        args: EvalArgs,
    },
    /// Export penultimate features and their 2-D PCA projection.
    Features {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        args: EvalArgs,
    },
    /// Run the 64-bit finite-difference gradient suite.
    Gradcheck {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        args: GradcheckArgs,
    },
    /// Write a procedural four-class dataset in the class-directory layout.
    Synth {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        args: SynthArgs,
    },
}

/// Flags shared by every command.
#[derive(Args, Debug)]
pub struct Common {
    /// JSON run configuration; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory [default: runs/<command>].
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Master seed for data generation, splitting, initialisation and training.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Model preset: paper (224 input), desk (64 input) or micro (32 input).
    #[arg(long)]
    pub preset: Option<String>,
    /// Worker threads for data loading and evaluation [default: all cores].
    #[arg(long)]
    pub threads: Option<usize>,
    /// Overwrite an output directory that holds a completed run.
    #[arg(long)]
    pub force: bool,
}

/// Dataset selection.
#[derive(Args, Debug)]
pub struct DataArgs {
    /// Dataset root laid out as <root>/<class>/<image>.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Use the procedural dataset with this many images per class.
    #[arg(long, value_name = "N_PER_CLASS")]
    pub synthetic: Option<usize>,
    /// Train,val,test fractions, e.g. 0.7,0.1,0.2 (the four-class MRI layout uses its published counts).
    #[arg(long, value_parser = parse_fractions)]
    pub fractions: Option<(f64, f64, f64)>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Number of epochs.
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Mini-batch size.
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Initial learning rate.
    #[arg(long)]
    pub lr: Option<f64>,
    /// Continue from <out>/last instead of starting afresh.
    #[arg(long)]
    pub resume: bool,
    /// Initialise matching parameters from a checkpoint directory.
    #[arg(long)]
    pub import_weights: Option<PathBuf>,
    /// Skip class balancing of the training split.
    #[arg(long)]
    pub no_oversample: bool,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Checkpoint directory (e.g. runs/train/best).
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    /// Which part of the dataset to use: train, val, test or all.
    #[arg(long, default_value = "test")]
    pub split: String,
}

#[derive(Args, Debug)]
pub struct GradcheckArgs {
    /// Run only these cases (repeatable).
    #[arg(long)]
    pub only: Vec<String>,
    /// Corrupt analytic gradients to confirm the harness detects errors.
    #[arg(long)]
    pub inject_fault: bool,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// Images per class.
    #[arg(long, default_value_t = 100)]
    pub n: usize,
    /// Image side length in pixels.
    #[arg(long, default_value_t = 64)]
    pub size: usize,
}

fn parse_fractions(s: &str) -> Result<(f64, f64, f64), String> {
    let v: Vec<f64> = s.split(',').map(|p| p.trim().parse::<f64>().map_err(|e| format!("`{p}`: {e}"))).collect::<Result<_, _>>()?;
    match v.as_slice() {
        &[a, b, c] => Ok((a, b, c)),
        _ => Err(format!("expected three comma-separated fractions, got {}", v.len())),
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::NonFinite { .. } => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let common = match &cli.command {
        Command::Train { common, .. }
        | Command::Eval { common, .. }
        | Command::Features { common, .. }
        | Command::Gradcheck { common, .. }
        | Command::Synth { common, .. } => common,
    };
    if let Some(n) = common.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot configure {n} threads: {e}");
            return ExitCode::from(2);
        }
    }
    let result = match &cli.command {
        Command::Train { common, data, args } => commands::train(common, data, args),
        Command::Eval { common, args } => commands::eval(common, args),
        Command::Features { common, args } => commands::features(common, args),
        Command::Gradcheck { common, args } => commands::gradcheck(common, args),
        Command::Synth { common, args } => commands::synth(common, args),
    };
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
