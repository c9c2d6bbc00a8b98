//! Metrics, streamed evaluation, the flat MLP baseline, and experiment
//! orchestration.

mod experiment;
mod mlp;
mod stream;

pub use experiment::{run_experiment, CellOutcome, ExperimentSpec, GridModel};
pub use mlp::{train_mlp_baseline, MlpHyperparams};
pub use stream::{stream_full_series, stream_predictions, FeedbackEvalMode, StepPrediction};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Round to two decimals on the percent scale.
pub fn percent(x: f64) -> f64 {
    (x * 10_000.0).round() / 100.0
}

/// Confusion counts and the derived metrics, on the percent scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsCore {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    /// Percent, two decimals; 0 when the denominator is zero (flagged).
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub zero_denominator_precision: bool,
    pub zero_denominator_recall: bool,
}

/// Counts true/false positives/negatives at `threshold` and derives
/// precision, recall, and F1.
pub fn f1_metrics(predictions: &[f64], labels: &[u8], threshold: f64) -> Result<MetricsCore> {
    if predictions.len() != labels.len() {
        return Err(Error::Contract(format!(
            "{} predictions vs {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    if predictions.is_empty() {
        return Err(Error::Contract("nothing to evaluate".into()));
    }
    let (mut tp, mut fp, mut tn, mut fn_) = (0u64, 0u64, 0u64, 0u64);
    for (&p, &y) in predictions.iter().zip(labels) {
        let hit = p >= threshold;
        match (hit, y) {
            (true, 1) => tp += 1,
            (true, 0) => fp += 1,
            (false, 0) => tn += 1,
            (false, 1) => fn_ += 1,
            _ => return Err(Error::Contract(format!("label must be 0 or 1, got {y}"))),
        }
    }
    Ok(MetricsCore::from_counts(tp, fp, tn, fn_))
}

impl MetricsCore {
    pub fn from_counts(tp: u64, fp: u64, tn: u64, fn_: u64) -> Self {
        let zero_p = tp + fp == 0;
        let zero_r = tp + fn_ == 0;
        let p = if zero_p { 0.0 } else { tp as f64 / (tp + fp) as f64 };
        let r = if zero_r { 0.0 } else { tp as f64 / (tp + fn_) as f64 };
        let f1 = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
        MetricsCore {
            tp,
            fp,
            tn,
            fn_,
            precision: percent(p),
            recall: percent(r),
            f1: percent(f1),
            zero_denominator_precision: zero_p,
            zero_denominator_recall: zero_r,
        }
    }
}

/// Full evaluation record for one (model, dataset, split) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub dataset: String,
    pub split: crate::data::Split,
    pub model_id: String,
    pub threshold: f64,
    #[serde(flatten)]
    pub metrics: MetricsCore,
    pub eval_feedback_mode: FeedbackEvalMode,
    /// Whether chained feedback was thresholded to 0/1 before reuse.
    pub hard_feedback: bool,
    pub wall_ms: u64,
}
