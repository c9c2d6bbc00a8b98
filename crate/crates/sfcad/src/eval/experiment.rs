//! Experiment orchestration: trains a grid of encoder x readout x feedback
//! cells (individually per dataset or jointly), evaluates every cell on the
//! test splits, and emits reports, per-step traces, and a summary table.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::data::{load_csv, Dataset, Split, SplitRatios};
use crate::error::{Error, Result};
use crate::eval::{f1_metrics, EvalReport};
use crate::model::{EncoderKind, ModelConfig, ReadoutKind};
use crate::train::{fit, TrainConfig};

use super::mlp::{mlp_stream, train_mlp_baseline, MlpHyperparams};
use super::stream::{stream_predictions, FeedbackEvalMode, StepPrediction};

/// Architecture dimensions shared by every cell of the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridModel {
    pub d_z: usize,
    pub window_len: usize,
    pub classifier_hidden: Vec<usize>,
    #[serde(default = "one")]
    pub n_heads: usize,
    #[serde(default = "one")]
    pub n_enc_layers: usize,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    /// Monitoring CSVs (each with its sidecar manifest).
    pub datasets: Vec<PathBuf>,
    /// Train one model per dataset (false) or one model on all (true).
    #[serde(default)]
    pub joint: bool,
    pub encoders: Vec<EncoderKind>,
    pub readouts: Vec<ReadoutKind>,
    pub feedback: Vec<bool>,
    pub model: GridModel,
    pub train: TrainConfig,
    pub seeds: Vec<u64>,
    /// Threshold chained feedback to 0/1 at evaluation.
    #[serde(default)]
    pub hard_feedback: bool,
    /// Also train the flat MLP reference per dataset.
    #[serde(default)]
    pub include_mlp_baseline: bool,
}

/// Result of one trained cell; failures are recorded, not fatal.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CellOutcome {
    pub cell: String,
    pub reports: Vec<EvalReport>,
    pub error: Option<String>,
}

fn metrics_report(
    dataset: &str,
    model_id: &str,
    steps: &[StepPrediction],
    mode: FeedbackEvalMode,
    hard_feedback: bool,
    wall_ms: u64,
) -> Result<EvalReport> {
    let probs: Vec<f64> = steps.iter().map(|s| s.prob).collect();
    let labels: Vec<u8> = steps.iter().map(|s| s.label).collect();
    Ok(EvalReport {
        dataset: dataset.to_string(),
        split: Split::Test,
        model_id: model_id.to_string(),
        threshold: 0.5,
        metrics: f1_metrics(&probs, &labels, 0.5)?,
        eval_feedback_mode: mode,
        hard_feedback,
        wall_ms,
    })
}

fn write_trace(dir: &Path, cell: &str, dataset: &str, steps: &[StepPrediction]) -> Result<()> {
    let mut out = String::from("time,label,prob\n");
    for s in steps {
        out.push_str(&format!("{},{},{}\n", s.time, s.label, s.prob));
    }
    fs::write(dir.join(format!("{cell}__{dataset}.csv")), out)?;
    Ok(())
}

struct Cell {
    id: String,
    model: Option<ModelConfig>, // None marks the MLP baseline
    train_on: Vec<usize>,
    seed: u64,
}

fn run_cell(
    cell: &Cell,
    datasets: &[Dataset],
    spec: &ExperimentSpec,
    traces_dir: &Path,
) -> Result<Vec<EvalReport>> {
    let started = Instant::now();
    let train_sets: Vec<&Dataset> = cell.train_on.iter().map(|&i| &datasets[i]).collect();
    let mut train_cfg = spec.train.clone();
    train_cfg.seed = cell.seed;

    let mut reports = Vec::new();
    match &cell.model {
        Some(config) => {
            let (ckpt, _log) = fit(config, &train_sets, &train_cfg)?;
            let mode = if config.feedback {
                FeedbackEvalMode::OwnPrediction
            } else {
                FeedbackEvalMode::NotApplicable
            };
            for &i in &cell.train_on {
                let ds = &datasets[i];
                let steps = stream_predictions(
                    config,
                    &ckpt.params,
                    ds,
                    Split::Test,
                    mode,
                    spec.hard_feedback,
                    0.5,
                )?;
                write_trace(traces_dir, &cell.id, &ds.name, &steps)?;
                reports.push(metrics_report(
                    &ds.name,
                    &config.model_id(),
                    &steps,
                    mode,
                    spec.hard_feedback && config.feedback,
                    started.elapsed().as_millis() as u64,
                )?);
            }
        }
        None => {
            let hp = MlpHyperparams {
                learning_rate: train_cfg.learning_rate,
                batch_size: train_cfg.batch_size,
                max_epochs: train_cfg.max_epochs,
                patience: train_cfg.patience,
                seed: cell.seed,
                ..Default::default()
            };
            let (model, _log) = train_mlp_baseline(&train_sets, &hp)?;
            for &i in &cell.train_on {
                let ds = &datasets[i];
                let steps = mlp_stream(&model, ds, Split::Test)?;
                write_trace(traces_dir, &cell.id, &ds.name, &steps)?;
                reports.push(metrics_report(
                    &ds.name,
                    "mlp",
                    &steps,
                    FeedbackEvalMode::NotApplicable,
                    false,
                    started.elapsed().as_millis() as u64,
                )?);
            }
        }
    }
    Ok(reports)
}

/// Runs the whole grid. Outputs under `out_dir`:
/// `reports/<cell>.json`, `traces/<cell>__<dataset>.csv`, `summary.csv`,
/// `summary.json`. A failing cell is recorded and the rest continue.
pub fn run_experiment(spec: &ExperimentSpec, out_dir: &Path) -> Result<Vec<CellOutcome>> {
    if spec.datasets.is_empty() || spec.seeds.is_empty() {
        return Err(Error::Config("experiment needs datasets and seeds".into()));
    }
    let reports_dir = out_dir.join("reports");
    let traces_dir = out_dir.join("traces");
    fs::create_dir_all(&reports_dir)?;
    fs::create_dir_all(&traces_dir)?;

    let mut datasets = Vec::new();
    for path in &spec.datasets {
        let mut ds = load_csv(path)?;
        ds.split(SplitRatios::default(), spec.model.window_len)?;
        ds.normalize()?;
        datasets.push(ds);
    }
    let d_input = datasets[0].d_input();

    // assemble the grid
    let mut cells = Vec::new();
    let groupings: Vec<Vec<usize>> = if spec.joint {
        vec![(0..datasets.len()).collect()]
    } else {
        (0..datasets.len()).map(|i| vec![i]).collect()
    };
    for &seed in &spec.seeds {
        for group in &groupings {
            let scope = if spec.joint {
                "joint".to_string()
            } else {
                datasets[group[0]].name.clone()
            };
            for &encoder in &spec.encoders {
                for &readout in &spec.readouts {
                    for &feedback in &spec.feedback {
                        let config = ModelConfig {
                            d_input,
                            d_z: spec.model.d_z,
                            encoder,
                            readout,
                            window_len: spec.model.window_len,
                            classifier_hidden: spec.model.classifier_hidden.clone(),
                            n_heads: spec.model.n_heads,
                            n_enc_layers: spec.model.n_enc_layers,
                            feedback,
                        };
                        cells.push(Cell {
                            id: format!("{}__{}__s{}", config.model_id(), scope, seed),
                            model: Some(config),
                            train_on: group.clone(),
                            seed,
                        });
                    }
                }
            }
            if spec.include_mlp_baseline && !spec.joint {
                cells.push(Cell {
                    id: format!("mlp__{scope}__s{seed}"),
                    model: None,
                    train_on: group.clone(),
                    seed,
                });
            }
        }
    }

    let mut outcomes = Vec::new();
    for cell in &cells {
        let outcome = match run_cell(cell, &datasets, spec, &traces_dir) {
            Ok(reports) => CellOutcome {
                cell: cell.id.clone(),
                reports,
                error: None,
            },
            Err(e) => CellOutcome {
                cell: cell.id.clone(),
                reports: Vec::new(),
                error: Some(e.to_string()),
            },
        };
        fs::write(
            reports_dir.join(format!("{}.json", outcome.cell)),
            serde_json::to_string_pretty(&outcome)?,
        )?;
        outcomes.push(outcome);
    }

    // summary table, one row per report
    let mut csv = String::from(
        "cell,dataset,model,seed,tp,fp,tn,fn,precision,recall,f1,eval_feedback_mode,error\n",
    );
    for o in &outcomes {
        if let Some(err) = &o.error {
            csv.push_str(&format!(
                "{},,,,,,,,,,,,{}\n",
                o.cell,
                err.replace([',', '\n'], ";")
            ));
        }
        for r in &o.reports {
            let mode = match r.eval_feedback_mode {
                FeedbackEvalMode::OwnPrediction => "own_prediction",
                FeedbackEvalMode::GroundTruth => "ground_truth",
                FeedbackEvalMode::NotApplicable => "n/a",
            };
            csv.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{},{},\n",
                o.cell,
                r.dataset,
                r.model_id,
                // the seed is embedded in the cell id; repeat it for grep-ability
                o.cell.rsplit("__s").next().unwrap_or("0"),
                r.metrics.tp,
                r.metrics.fp,
                r.metrics.tn,
                r.metrics.fn_,
                r.metrics.precision,
                r.metrics.recall,
                r.metrics.f1,
                mode,
            ));
        }
    }
    fs::write(out_dir.join("summary.csv"), csv)?;
    fs::write(
        out_dir.join("summary.json"),
        serde_json::to_string_pretty(&outcomes)?,
    )?;
    Ok(outcomes)
}
