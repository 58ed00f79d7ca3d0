//! `papr-lab`: dataset generation, training, evaluation, target sweeps and
//! time-domain traces for the PAPR reduction laboratory.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use papr_core::neural::Optimizer;
use papr_core::signal::Modulation;

use crate::config::ExperimentConfig;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] papr_core::Error),
}

impl CliError {
    fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Core(e) => e.kind(),
        }
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Core(_) => 1,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(e.into())
    }
}

#[derive(Debug, Parser)]
#[command(name = "papr-lab", version, about = "OFDM PAPR reduction laboratory")]
struct Cli {
    /// TOML experiment config; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Master seed; every other seed derives from it.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a labelled dataset.
    Gen(DatasetArgs),
    /// Train the network on a dataset's training partition.
    Train(TrainArgs),
    /// Compare baseline, MCSA and network on the test partition.
    Eval(EvalArgs),
    /// Emit one OFDM symbol's instantaneous power and PAPR.
    Trace(TraceArgs),
    /// Mean MCSA trial count against target PAPR.
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
struct DatasetArgs {
    /// Number of subcarriers K.
    #[arg(long)]
    k: Option<usize>,
    /// Number of pilot subcarriers.
    #[arg(long)]
    pilots: Option<usize>,
    /// Comma-separated pilot positions.
    #[arg(long, value_delimiter = ',')]
    pilot_indices: Option<Vec<usize>>,
    #[arg(long)]
    samples: Option<usize>,
    /// Training fraction.
    #[arg(long)]
    split: Option<f64>,
    #[arg(long)]
    modulation: Option<Modulation>,
    #[arg(long)]
    oversampling: Option<usize>,
    /// MCSA target PAPR in dB for labels and evaluation.
    #[arg(long)]
    target_db: Option<f64>,
    /// MCSA trial budget.
    #[arg(long)]
    max_trials: Option<u32>,
    /// Also write the packed binary dataset.
    #[arg(long)]
    binary: bool,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// Dataset directory (defaults to --out).
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    final_lr: Option<f64>,
    #[arg(long)]
    weight_decay: Option<f64>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    optimizer: Option<Optimizer>,
    #[arg(long)]
    validation_fraction: Option<f64>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// Dataset directory (defaults to --out).
    #[arg(long)]
    data: Option<PathBuf>,
    /// Model file (defaults to <out>/model.mlp).
    #[arg(long)]
    model: Option<PathBuf>,
    /// MCSA target PAPR in dB.
    #[arg(long)]
    target_db: Option<f64>,
    #[arg(long)]
    max_trials: Option<u32>,
    /// Comma-separated CCDF operating points.
    #[arg(long, value_delimiter = ',')]
    operating_points: Option<Vec<f64>>,
}

#[derive(Debug, Args)]
struct TraceArgs {
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    modulation: Option<Modulation>,
    #[arg(long)]
    oversampling: Option<usize>,
    /// Use an all-ones spectrum instead of random symbols.
    #[arg(long)]
    all_ones: bool,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    pilots: Option<usize>,
    /// Symbols per target.
    #[arg(long)]
    symbols: Option<usize>,
    /// Comma-separated target PAPRs in dB.
    #[arg(long, value_delimiter = ',')]
    targets: Option<Vec<f64>>,
    #[arg(long)]
    max_trials: Option<u32>,
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let (mut config, verbatim) = match &cli.config {
        Some(path) => {
            let (c, text) = ExperimentConfig::load(path)?;
            (c, Some(text))
        }
        None => (ExperimentConfig::default(), None),
    };
    set(&mut config.out, cli.out);
    set(&mut config.seed, cli.seed);
    set(&mut config.threads, cli.threads);
    if config.threads > 0 {
        // Fails only if a pool already exists, which cannot happen here.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(config.threads)
            .build_global();
    }

    let ctx = commands::Context::new(config.clone(), verbatim);
    match cli.command {
        Command::Gen(a) => {
            let mut c = config;
            let d = &mut c.dataset;
            set(&mut d.k, a.k);
            set(&mut d.pilots, a.pilots);
            if a.pilot_indices.is_some() {
                d.pilot_indices = a.pilot_indices;
            }
            set(&mut d.samples, a.samples);
            set(&mut d.split, a.split);
            set(&mut d.modulation, a.modulation);
            set(&mut d.oversampling, a.oversampling);
            d.binary |= a.binary;
            set(&mut c.mcsa.target_db, a.target_db);
            set(&mut c.mcsa.max_trials, a.max_trials);
            ctx.with(c).gen()
        }
        Command::Train(a) => {
            let mut c = config;
            let t = &mut c.train;
            set(&mut t.epochs, a.epochs);
            set(&mut t.batch_size, a.batch_size);
            set(&mut t.learning_rate, a.lr);
            set(&mut t.final_learning_rate, a.final_lr);
            set(&mut t.weight_decay, a.weight_decay);
            set(&mut t.hidden, a.hidden);
            set(&mut t.optimizer, a.optimizer);
            set(&mut t.validation_fraction, a.validation_fraction);
            ctx.with(c).train(a.data)
        }
        Command::Eval(a) => {
            let mut c = config;
            set(&mut c.mcsa.target_db, a.target_db);
            set(&mut c.mcsa.max_trials, a.max_trials);
            set(&mut c.eval.operating_points, a.operating_points);
            ctx.with(c).eval(a.data, a.model)
        }
        Command::Trace(a) => {
            let mut c = config;
            set(&mut c.trace.k, a.k);
            set(&mut c.trace.modulation, a.modulation);
            set(&mut c.trace.oversampling, a.oversampling);
            c.trace.all_ones |= a.all_ones;
            ctx.with(c).trace()
        }
        Command::Sweep(a) => {
            let mut c = config;
            set(&mut c.dataset.k, a.k);
            set(&mut c.dataset.pilots, a.pilots);
            set(&mut c.sweep.symbols, a.symbols);
            set(&mut c.sweep.targets_db, a.targets);
            set(&mut c.mcsa.max_trials, a.max_trials);
            ctx.with(c).sweep()
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                e.exit();
            }
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("invalid arguments");
            let first = first.trim_start_matches("error: ");
            eprintln!("error kind=usage message={first:?}");
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let message = e.to_string().replace('\n', " ");
            eprintln!("error kind={} message={message:?}", e.kind());
            ExitCode::from(e.exit_code())
        }
    }
}
