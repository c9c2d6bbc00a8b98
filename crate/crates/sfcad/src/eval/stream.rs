//! Chronological evaluation over a dataset split.
//!
//! Non-feedback models score each window independently. Feedback models walk
//! the split in time order, feeding each window the predictions already made
//! for the preceding steps (or the ground-truth labels, for the ablation);
//! steps before the split start count as normal (feedback 0).

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Split};
use crate::error::Result;
use crate::model::{clamp_prob, predict_window, FeedbackPlan, ModelConfig, Parameters};
use crate::train::windows::{materialize, windows_in_split};

/// Where a feedback model's previous-step inputs come from at evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeedbackEvalMode {
    /// Chain the model's own predictions through the stream.
    OwnPrediction,
    /// Feed ground-truth previous labels (ablation).
    GroundTruth,
    /// Non-feedback model; previous predictions are unused.
    #[serde(rename = "n/a")]
    NotApplicable,
}

/// Per-step model output for trace files and metric computation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepPrediction {
    pub time: usize,
    pub label: u8,
    pub prob: f64,
}

/// Scores every window of `split` in chronological order and returns one
/// prediction per step. Deterministic for fixed inputs.
pub fn stream_predictions(
    config: &ModelConfig,
    params: &Parameters,
    dataset: &Dataset,
    split: Split,
    mode: FeedbackEvalMode,
    hard_feedback: bool,
    threshold: f64,
) -> Result<Vec<StepPrediction>> {
    let windows = windows_in_split(dataset, config.window_len, split)?;
    stream_over(config, params, dataset, &windows, mode, hard_feedback, threshold)
}

/// Scores every window of the whole series (ends `l-1..T`).
pub fn stream_full_series(
    config: &ModelConfig,
    params: &Parameters,
    dataset: &Dataset,
    mode: FeedbackEvalMode,
    hard_feedback: bool,
    threshold: f64,
) -> Result<Vec<StepPrediction>> {
    let windows = crate::train::windows::make_windows(dataset, config.window_len)?;
    stream_over(config, params, dataset, &windows, mode, hard_feedback, threshold)
}

fn stream_over(
    config: &ModelConfig,
    params: &Parameters,
    dataset: &Dataset,
    windows: &[crate::train::windows::WindowRef],
    mode: FeedbackEvalMode,
    hard_feedback: bool,
    threshold: f64,
) -> Result<Vec<StepPrediction>> {
    let l = config.window_len;

    if !config.feedback {
        // windows are independent; fan out and collect in order
        return windows
            .par_iter()
            .map(|&w| {
                let mw = materialize(dataset, w, l);
                let prob = predict_window(config, params, &mw, FeedbackPlan::None)?;
                Ok(StepPrediction {
                    time: w.end,
                    label: mw.label,
                    prob,
                })
            })
            .collect();
    }

    // windows end at consecutive steps; chained[j] is the prediction made
    // for step base + j
    let base = match windows.first() {
        Some(w) => w.end,
        None => return Ok(Vec::new()),
    };
    let mut out = Vec::with_capacity(windows.len());
    let mut chained: Vec<f64> = Vec::with_capacity(windows.len());
    for &w in windows {
        let mw = materialize(dataset, w, l);
        let values: Vec<f64> = (0..l)
            .map(|i| {
                let step = w.end + 1 - l + i; // frame i's step; feedback pairs step-1
                match mode {
                    FeedbackEvalMode::GroundTruth => f64::from(dataset.label_before(step)),
                    _ => {
                        if step <= base {
                            0.0 // before the stream's first prediction: cold start
                        } else {
                            chained[step - 1 - base]
                        }
                    }
                }
            })
            .collect();
        let prob = predict_window(config, params, &mw, FeedbackPlan::Given(&values))?;
        let fed = if hard_feedback {
            f64::from(prob >= threshold)
        } else {
            clamp_prob(prob)
        };
        chained.push(fed);
        out.push(StepPrediction {
            time: w.end,
            label: mw.label,
            prob,
        });
    }
    Ok(out)
}
