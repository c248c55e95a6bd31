//! `pact`: dataset synthesis, training, prediction, evaluation and peak
//! diagnostics for the storm-surge emulator.
//!
//! Settings resolve as flags > `PACT_*` environment variables > `--config`
//! file > built-in defaults. Exit codes: 0 success, 2 configuration or input
//! error, 3 numerical failure.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use config::RunConfig;

#[derive(Debug, Parser)]
#[command(name = "pact", version, about = "Peak-aware graph transformer storm-surge emulator")]
struct Cli {
    /// JSON run configuration; flags override its values.
    #[arg(long, global = true, env = "PACT_CONFIG")]
    config: Option<PathBuf>,
    #[arg(long, global = true, env = "PACT_SEED")]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, env = "PACT_OUT")]
    out: Option<PathBuf>,
    /// Suppress progress output.
    #[arg(long, global = true, env = "PACT_QUIET")]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic dataset into the output directory.
    GenData(GenDataArgs),
    /// Train one model on one station and write a checkpoint.
    Train(TrainArgs),
    /// Write hourly prediction CSVs, one per season.
    Predict(PredictArgs),
    /// Overall and peak-subset metrics of a prediction against ground truth.
    Evaluate(EvaluateArgs),
    /// Event extraction, pairing, densities and severity-binned RMSE.
    DiagnosePeaks(DiagnoseArgs),
}

#[derive(Debug, Args)]
struct GenDataArgs {
    /// Number of past seasons.
    #[arg(long)]
    years: Option<u32>,
    /// Number of future seasons.
    #[arg(long)]
    future_years: Option<u32>,
    #[arg(long)]
    season_hours: Option<u32>,
    /// Grid side length (square grid).
    #[arg(long)]
    grid: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum LossKind {
    Mse,
    #[value(name = "peak_aware")]
    PeakAware,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long, env = "PACT_DATASET")]
    dataset: Option<PathBuf>,
    #[arg(long, env = "PACT_STATION")]
    station: Option<String>,
    /// pact, stgnn or simple_gnn.
    #[arg(long, env = "PACT_MODEL")]
    model: Option<String>,
    /// past_only, future_period or all_year.
    #[arg(long)]
    split: Option<String>,
    /// Keep raw pressure instead of the spatial anomaly.
    #[arg(long)]
    no_center_pressure: bool,
    #[arg(long, value_enum)]
    loss: Option<LossKind>,
    #[arg(long)]
    lambda_tail: Option<f64>,
    #[arg(long)]
    lambda_slope: Option<f64>,
    #[arg(long)]
    no_dual_head: bool,
    #[arg(long, env = "PACT_EPOCHS")]
    epochs: Option<usize>,
    #[arg(long)]
    warmup_epochs: Option<usize>,
    #[arg(long, env = "PACT_BATCH_SIZE")]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    d_model: Option<usize>,
    #[arg(long)]
    heads: Option<usize>,
    #[arg(long)]
    temporal_layers: Option<usize>,
    #[arg(long)]
    dropout: Option<f64>,
}

#[derive(Debug, Args)]
struct PredictArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long, env = "PACT_DATASET")]
    dataset: Option<PathBuf>,
    /// Station id; defaults to the checkpoint's station.
    #[arg(long)]
    station: Option<String>,
    /// Comma-separated season years; all seasons when omitted.
    #[arg(long, value_delimiter = ',')]
    years: Vec<i32>,
    #[arg(long)]
    batch_size: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SubsetKind {
    Hourly,
    Sample,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    /// Prediction CSV (`hour,pred_m`).
    #[arg(long)]
    pred: PathBuf,
    /// Ground-truth CSV (`hour,<value>`, e.g. a surge file).
    #[arg(long)]
    gt: PathBuf,
    #[arg(long, value_enum)]
    subset: Option<SubsetKind>,
    /// Comma-separated peak fractions.
    #[arg(long, value_delimiter = ',')]
    fractions: Vec<f64>,
}

#[derive(Debug, Args)]
struct DiagnoseArgs {
    /// Prediction CSVs, one per season.
    #[arg(long, required = true)]
    pred: Vec<PathBuf>,
    /// Ground-truth CSVs in the same order as `--pred`.
    #[arg(long, required = true)]
    gt: Vec<PathBuf>,
    /// Model name used in the density columns.
    #[arg(long, default_value = "model")]
    label: String,
    #[arg(long)]
    q: Option<f64>,
    #[arg(long)]
    gap: Option<i64>,
    #[arg(long)]
    min_duration: Option<usize>,
    #[arg(long)]
    tolerance: Option<i64>,
    #[arg(long)]
    min_count: Option<usize>,
    #[arg(long)]
    bins: Option<usize>,
    #[arg(long)]
    smooth: Option<usize>,
}

fn resolve(cli: &Cli) -> pact_core::Result<RunConfig> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.out = o.clone();
    }
    Ok(cfg)
}

fn run(cli: Cli) -> pact_core::Result<()> {
    let mut cfg = resolve(&cli)?;
    let log = commands::Log { quiet: cli.quiet };
    match cli.command {
        Command::GenData(a) => {
            set(&mut cfg.synth.past_years, a.years);
            set(&mut cfg.synth.future_years, a.future_years);
            set(&mut cfg.synth.season_hours, a.season_hours);
            if let Some(n) = a.grid {
                cfg.synth.grid.ny = n;
                cfg.synth.grid.nx = n;
            }
            commands::gen_data(&cfg, &log)
        }
        Command::Train(a) => {
            if let Some(d) = a.dataset {
                cfg.dataset = Some(d);
            }
            if let Some(s) = a.station {
                cfg.station = Some(s);
            }
            if let Some(m) = a.model {
                cfg.model = m.parse()?;
            }
            if let Some(s) = a.split {
                cfg.split = s.parse()?;
            }
            if a.no_center_pressure {
                cfg.center_pressure = false;
            }
            if a.no_dual_head {
                cfg.pact.use_dual_head = false;
            }
            if a.loss == Some(LossKind::Mse) {
                cfg.train.loss.lambda_tail = 0.0;
                cfg.train.loss.lambda_slope = 0.0;
            }
            set(&mut cfg.train.loss.lambda_tail, a.lambda_tail);
            set(&mut cfg.train.loss.lambda_slope, a.lambda_slope);
            set(&mut cfg.train.epochs, a.epochs);
            set(&mut cfg.train.warmup_epochs, a.warmup_epochs);
            set(&mut cfg.train.batch_size, a.batch_size);
            set(&mut cfg.train.peak_lr, a.lr);
            if let Some(d) = a.d_model {
                cfg.pact.d_model = d;
                cfg.pact.ff_width = 4 * d;
            }
            set(&mut cfg.pact.heads, a.heads);
            set(&mut cfg.pact.temporal_layers, a.temporal_layers);
            set(&mut cfg.pact.dropout, a.dropout);
            commands::train(&cfg, &log)
        }
        Command::Predict(a) => {
            if let Some(d) = a.dataset {
                cfg.dataset = Some(d);
            }
            if let Some(s) = a.station {
                cfg.station = Some(s);
            }
            set(&mut cfg.predict_batch_size, a.batch_size);
            commands::predict(&cfg, &a.checkpoint, &a.years, &log)
        }
        Command::Evaluate(a) => {
            if let Some(s) = a.subset {
                cfg.eval.subset = match s {
                    SubsetKind::Hourly => pact_core::eval::PeakSubset::Hourly,
                    SubsetKind::Sample => pact_core::eval::PeakSubset::Sample,
                };
            }
            if !a.fractions.is_empty() {
                cfg.eval.fractions = a.fractions;
            }
            commands::evaluate(&cfg, &a.pred, &a.gt, &log)
        }
        Command::DiagnosePeaks(a) => {
            let ev = &mut cfg.eval.events;
            set(&mut ev.q, a.q);
            set(&mut ev.gap_h, a.gap);
            set(&mut ev.min_duration_h, a.min_duration);
            set(&mut ev.pair_tolerance_h, a.tolerance);
            set(&mut cfg.eval.binned.min_count, a.min_count);
            set(&mut cfg.eval.binned.bins, a.bins);
            set(&mut cfg.eval.binned.smooth_window, a.smooth);
            commands::diagnose_peaks(&cfg, &a.pred, &a.gt, &a.label, &log)
        }
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 3 } else { 2 })
        }
    }
}
