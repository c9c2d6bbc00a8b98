//! `sfcad`: generate synthetic SFC monitoring data, train and evaluate
//! sequential anomaly-detection models, and run experiment grids.
//!
//! All configs are JSON. Exit code 0 on success; on failure a machine-
//! readable error record is printed to stderr and the exit code is nonzero.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use sfcad::checkpoint::Checkpoint;
use sfcad::data::{load_csv, save_csv, Split, SplitRatios};
use sfcad::error::{Error, Result};
use sfcad::eval::{
    f1_metrics, run_experiment, stream_full_series, stream_predictions, EvalReport,
    ExperimentSpec, FeedbackEvalMode,
};
use sfcad::model::ModelConfig;
use sfcad::synth::{generate, lad_like, wsd_like, ScenarioConfig};
use sfcad::train::{fit, TrainConfig};

#[derive(Parser)]
#[command(name = "sfcad", version, about = "Sequential anomaly detection for VNF service function chains")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic monitoring dataset (CSV + manifest).
    Generate(GenerateArgs),
    /// Train a model and write a checkpoint plus a JSON-lines training log.
    Train(TrainArgs),
    /// Evaluate a checkpoint on one split of a dataset.
    Eval(EvalArgs),
    /// Emit per-step predictions (time,label,prob CSV).
    Predict(PredictArgs),
    /// Train and evaluate a whole encoder x readout x feedback grid.
    Experiment(ExperimentArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// Scenario config JSON; alternatively use --preset.
    #[arg(long, conflicts_with = "preset")]
    scenario: Option<PathBuf>,
    /// Shipped scenario: `wsd-like` (V=5, default SLA) or `lad-like`
    /// (V=4, strict SLA).
    #[arg(long)]
    preset: Option<String>,
    /// Steps to generate when using --preset.
    #[arg(long, default_value_t = 20_000)]
    steps: usize,
    /// Overrides the scenario's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for `<name>.csv` and `<name>.manifest.json`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    /// Model config JSON (ModelConfig schema).
    #[arg(long)]
    model_config: PathBuf,
    /// One or more monitoring CSVs; several train jointly.
    #[arg(long, required = true, num_args = 1..)]
    data: Vec<PathBuf>,
    /// Train config JSON (TrainConfig schema).
    #[arg(long)]
    train_config: PathBuf,
    /// Checkpoint output path.
    #[arg(long)]
    out: PathBuf,
    /// Training log path (default: `<out>.log.jsonl`).
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Split to evaluate: train, val, or test.
    #[arg(long, default_value = "test")]
    split: String,
    /// Chain thresholded 0/1 feedback instead of raw probabilities.
    #[arg(long)]
    hard_feedback: bool,
    /// Feed ground-truth previous labels instead of chained predictions.
    #[arg(long)]
    ground_truth_feedback: bool,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Restrict to a split (train/val/test); the whole series by default.
    #[arg(long)]
    split: Option<String>,
    /// Output CSV path (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExperimentArgs {
    /// Experiment spec JSON (ExperimentSpec schema).
    #[arg(long)]
    spec: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

fn parse_split(name: &str) -> Result<Split> {
    match name {
        "train" => Ok(Split::Train),
        "val" => Ok(Split::Val),
        "test" => Ok(Split::Test),
        other => Err(Error::Config(format!(
            "unknown split `{other}` (expected train, val, or test)"
        ))),
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

/// Loads a CSV and prepares it for a model: chronological split, then
/// z-scoring with the checkpoint's stored statistics when the dataset name
/// matches, otherwise with its own training split.
fn prepare(
    path: &Path,
    window_len: usize,
    ckpt: Option<&Checkpoint>,
) -> Result<sfcad::data::Dataset> {
    let mut ds = load_csv(path)?;
    ds.split(SplitRatios::default(), window_len)?;
    match ckpt.and_then(|c| c.stats_for(&ds.name)) {
        Some(stats) => ds.normalize_with(stats.clone())?,
        None => ds.normalize()?,
    }
    Ok(ds)
}

fn cmd_generate(args: &GenerateArgs) -> Result<()> {
    let mut config: ScenarioConfig = match (&args.scenario, &args.preset) {
        (Some(path), None) => read_json(path)?,
        (None, Some(name)) => match name.as_str() {
            "wsd-like" => wsd_like(args.steps, args.seed.unwrap_or(7)),
            "lad-like" => lad_like(args.steps, args.seed.unwrap_or(7)),
            other => {
                return Err(Error::Config(format!(
                    "unknown preset `{other}` (expected wsd-like or lad-like)"
                )))
            }
        },
        _ => {
            return Err(Error::Config(
                "give exactly one of --scenario or --preset".into(),
            ))
        }
    };
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    fs::create_dir_all(&args.out)?;
    let (dataset, _) = generate(&config)?;
    let csv = args.out.join(format!("{}.csv", config.name));
    save_csv(&dataset, &csv)?;
    fs::write(
        args.out.join(format!("{}.scenario.json", config.name)),
        serde_json::to_string_pretty(&config)?,
    )?;
    let anomalies: usize = dataset.labels().iter().map(|&l| usize::from(l)).sum();
    println!(
        "{}",
        serde_json::json!({
            "csv": csv,
            "steps": dataset.len(),
            "vnfs": dataset.v(),
            "anomalies": anomalies,
        })
    );
    Ok(())
}

fn cmd_train(args: &TrainArgs) -> Result<()> {
    let model: ModelConfig = read_json(&args.model_config)?;
    let train: TrainConfig = read_json(&args.train_config)?;
    let datasets: Vec<_> = args
        .data
        .iter()
        .map(|p| prepare(p, model.window_len, None))
        .collect::<Result<_>>()?;
    let refs: Vec<&sfcad::data::Dataset> = datasets.iter().collect();
    let (ckpt, log) = fit(&model, &refs, &train)?;
    ckpt.save(&args.out)?;
    let log_path = args
        .log
        .clone()
        .unwrap_or_else(|| args.out.with_extension("log.jsonl"));
    let mut lines = String::new();
    for record in &log {
        lines.push_str(&serde_json::to_string(record)?);
        lines.push('\n');
    }
    fs::write(&log_path, lines)?;
    let last = log.last().expect("at least one epoch");
    println!(
        "{}",
        serde_json::json!({
            "checkpoint": args.out,
            "log": log_path,
            "epochs": log.len(),
            "best_val_f1": log.iter().map(|r| r.val_f1).fold(0.0, f64::max),
            "final_train_loss": last.train_loss,
        })
    );
    Ok(())
}

fn cmd_eval(args: &EvalArgs) -> Result<()> {
    let started = std::time::Instant::now();
    let ckpt = Checkpoint::load(&args.ckpt)?;
    let split = parse_split(&args.split)?;
    let ds = prepare(&args.data, ckpt.config.window_len, Some(&ckpt))?;
    let mode = if !ckpt.config.feedback {
        FeedbackEvalMode::NotApplicable
    } else if args.ground_truth_feedback {
        FeedbackEvalMode::GroundTruth
    } else {
        FeedbackEvalMode::OwnPrediction
    };
    let steps = stream_predictions(
        &ckpt.config,
        &ckpt.params,
        &ds,
        split,
        mode,
        args.hard_feedback,
        0.5,
    )?;
    let probs: Vec<f64> = steps.iter().map(|s| s.prob).collect();
    let labels: Vec<u8> = steps.iter().map(|s| s.label).collect();
    let report = EvalReport {
        dataset: ds.name.clone(),
        split,
        model_id: ckpt.config.model_id(),
        threshold: 0.5,
        metrics: f1_metrics(&probs, &labels, 0.5)?,
        eval_feedback_mode: mode,
        hard_feedback: args.hard_feedback && ckpt.config.feedback,
        wall_ms: started.elapsed().as_millis() as u64,
    };
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn cmd_predict(args: &PredictArgs) -> Result<()> {
    let ckpt = Checkpoint::load(&args.ckpt)?;
    let ds = prepare(&args.data, ckpt.config.window_len, Some(&ckpt))?;
    let mode = if ckpt.config.feedback {
        FeedbackEvalMode::OwnPrediction
    } else {
        FeedbackEvalMode::NotApplicable
    };
    let steps = match &args.split {
        Some(name) => stream_predictions(
            &ckpt.config,
            &ckpt.params,
            &ds,
            parse_split(name)?,
            mode,
            false,
            0.5,
        )?,
        None => stream_full_series(&ckpt.config, &ckpt.params, &ds, mode, false, 0.5)?,
    };
    let mut out = String::from("time,label,prob\n");
    for s in &steps {
        out.push_str(&format!("{},{},{}\n", s.time, s.label, s.prob));
    }
    match &args.out {
        Some(path) => fs::write(path, out)?,
        None => print!("{out}"),
    }
    Ok(())
}

fn cmd_experiment(args: &ExperimentArgs) -> Result<()> {
    let spec: ExperimentSpec = read_json(&args.spec)?;
    let outcomes = run_experiment(&spec, &args.out)?;
    let failed = outcomes.iter().filter(|o| o.error.is_some()).count();
    println!(
        "{}",
        serde_json::json!({
            "out": args.out,
            "cells": outcomes.len(),
            "failed_cells": failed,
            "summary_csv": args.out.join("summary.csv"),
        })
    );
    Ok(())
}

fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::Dimension(_) => "dimension",
        Error::Contract(_) => "contract",
        Error::Capacity(_) => "capacity",
        Error::Integrity(_) => "integrity",
        Error::Parse { .. } => "parse",
        Error::Config(_) => "config",
        Error::Io(_) => "io",
        Error::Json(_) => "json",
    }
}

fn main() {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Generate(args) => cmd_generate(args),
        Command::Train(args) => cmd_train(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Predict(args) => cmd_predict(args),
        Command::Experiment(args) => cmd_experiment(args),
    };
    if let Err(e) = result {
        eprintln!(
            "{}",
            serde_json::json!({
                "error": { "kind": error_kind(&e), "message": e.to_string() }
            })
        );
        std::process::exit(1);
    }
}
