//! Window construction, optimization, teacher forcing, and the joint
//! training loop with early stopping on validation F1.

pub mod adam;
pub mod loss;
pub mod schedule;
pub mod windows;

pub use adam::OptimizerState;
pub use loss::bce_loss;
pub use schedule::{joint_schedule, Batch};
pub use windows::{make_windows, materialize, windows_in_split, WindowRef};

use std::collections::BTreeMap;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::checkpoint::{Checkpoint, SeedLineage, CHECKPOINT_VERSION};
use crate::data::{Dataset, Split};
use crate::error::{Error, Result};
use crate::eval::{f1_metrics, stream_predictions, FeedbackEvalMode};
use crate::model::{
    forward_window, init_params, stage_params, FeedbackPlan, ModelConfig, MonitoringWindow,
    Parameters,
};
use crate::tape::Tape;
use crate::tensor::Tensor;

/// How the feedback column is fed during training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeedbackTrainingMode {
    /// Ground-truth previous labels for every window step.
    TeacherForcing,
    /// The model's own step predictions within each window; only the first
    /// step uses the ground-truth boundary label.
    OwnPrediction,
    /// Teacher forcing for the first `switch_epoch` epochs, own predictions
    /// afterwards.
    Scheduled { switch_epoch: usize },
}

impl Default for FeedbackTrainingMode {
    /// Scheduled sampling: pure teacher forcing never exposes the model to a
    /// wrong chain state, and at evaluation a single missed onset then
    /// propagates through the feedback loop for the rest of the fault.
    fn default() -> Self {
        FeedbackTrainingMode::Scheduled { switch_epoch: 5 }
    }
}

const BOUNDARY_NOISE_P: f64 = 0.25;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without a validation-F1 improvement before stopping.
    pub patience: usize,
    pub seed: u64,
    #[serde(default)]
    pub feedback_training_mode: FeedbackTrainingMode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            batch_size: 64,
            max_epochs: 15,
            patience: 3,
            seed: 1,
            feedback_training_mode: FeedbackTrainingMode::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.learning_rate <= 0.0 && self.learning_rate != 0.0 {
            return Err(Error::Config("learning_rate must be >= 0".into()));
        }
        if self.batch_size == 0 || self.patience == 0 || self.max_epochs == 0 {
            return Err(Error::Config(
                "batch_size, patience and max_epochs must be >= 1".into(),
            ));
        }
        Ok(())
    }

    fn teacher_forcing_at(&self, epoch: usize) -> bool {
        match self.feedback_training_mode {
            FeedbackTrainingMode::TeacherForcing => true,
            FeedbackTrainingMode::OwnPrediction => false,
            FeedbackTrainingMode::Scheduled { switch_epoch } => epoch <= switch_epoch,
        }
    }
}

/// One line of the training log (JSON-lines on disk). Metric values are on
/// the percent scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_precision: f64,
    pub val_recall: f64,
    pub val_f1: f64,
    pub wall_ms: u64,
}

/// Early-stop bookkeeping: stop after `patience` observations without a
/// strict improvement of the best value.
#[derive(Debug, Clone)]
pub struct EarlyStop {
    patience: usize,
    best: Option<f64>,
    stale: usize,
}

impl EarlyStop {
    pub fn new(patience: usize) -> Self {
        EarlyStop {
            patience,
            best: None,
            stale: 0,
        }
    }

    /// Feeds one validation value; returns `(improved, stop_now)`.
    pub fn observe(&mut self, value: f64) -> (bool, bool) {
        let improved = self.best.map_or(true, |b| value > b);
        if improved {
            self.best = Some(value);
            self.stale = 0;
        } else {
            self.stale += 1;
        }
        (improved, self.stale >= self.patience)
    }
}

/// Feedback protocol for one optimizer step.
#[derive(Debug, Clone, Copy)]
pub enum StepFeedback<'a> {
    /// Ground-truth previous labels at every window position.
    TeacherForcing,
    /// The model's own within-window predictions; `boundaries`, when given,
    /// overrides the ground-truth first-frame value per window (used to
    /// inject wrong chain states during training).
    OwnPrediction { boundaries: Option<&'a [f64]> },
}

/// One Adam update from the mean gradient of a V-homogeneous batch.
/// Gradients fan out across windows and reduce in batch order, so the result
/// is bitwise deterministic regardless of thread count.
pub fn train_step(
    config: &ModelConfig,
    params: &mut Parameters,
    opt: &mut OptimizerState,
    batch: &[MonitoringWindow],
    feedback: StepFeedback<'_>,
    learning_rate: f64,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::Contract("empty batch".into()));
    }
    let v = batch[0].v();
    if batch.iter().any(|w| w.v() != v) {
        return Err(Error::Contract(
            "batch mixes windows with different chain lengths".into(),
        ));
    }
    if let StepFeedback::OwnPrediction {
        boundaries: Some(b),
    } = feedback
    {
        if b.len() != batch.len() {
            return Err(Error::Contract(format!(
                "{} boundary values for a batch of {}",
                b.len(),
                batch.len()
            )));
        }
    }

    let names: Vec<String> = params.iter().map(|(n, _)| n.clone()).collect();
    let per_window: Vec<(f64, Vec<Tensor>)> = batch
        .par_iter()
        .enumerate()
        .map(|(idx, window)| -> Result<(f64, Vec<Tensor>)> {
            let mut tape = Tape::new();
            let staged = stage_params(&mut tape, params, true);
            let fb_values: Vec<f64>;
            let plan = if !config.feedback {
                FeedbackPlan::None
            } else {
                match feedback {
                    StepFeedback::TeacherForcing => {
                        fb_values =
                            window.prev_labels.iter().map(|&y| f64::from(y)).collect();
                        FeedbackPlan::Given(&fb_values)
                    }
                    StepFeedback::OwnPrediction { boundaries } => {
                        FeedbackPlan::OwnWithinWindow {
                            first: boundaries
                                .map(|b| b[idx])
                                .unwrap_or_else(|| f64::from(window.prev_labels[0])),
                        }
                    }
                }
            };
            let art = forward_window(&mut tape, config, &staged, window, plan)?;
            let loss = tape.bce_from_logit(art.logit, f64::from(window.label))?;
            let grads = tape.backward(loss)?;
            let tensors = staged
                .iter()
                .map(|(_, &var)| grads.of(var))
                .collect::<Vec<_>>();
            Ok((tape.scalar_value(loss), tensors))
        })
        .collect::<Result<_>>()?;

    let scale = 1.0 / batch.len() as f64;
    let mut mean_loss = 0.0;
    let mut sums: Vec<Vec<f64>> = per_window[0]
        .1
        .iter()
        .map(|t| vec![0.0; t.numel()])
        .collect();
    for (loss, grads) in &per_window {
        mean_loss += loss * scale;
        for (sum, g) in sums.iter_mut().zip(grads) {
            for (s, &x) in sum.iter_mut().zip(g.values()) {
                *s += x;
            }
        }
    }
    let mean_grads: BTreeMap<String, Tensor> = names
        .iter()
        .zip(per_window[0].1.iter().zip(sums))
        .map(|(name, (proto, mut sum))| {
            for s in &mut sum {
                *s *= scale;
            }
            Ok((name.clone(), Tensor::new(proto.shape().to_vec(), sum)?))
        })
        .collect::<Result<_>>()?;

    opt.apply(params, &mean_grads, learning_rate)?;
    Ok(mean_loss)
}

/// Validation metrics pooled over every dataset's validation stream.
fn validation_f1(
    config: &ModelConfig,
    params: &Parameters,
    datasets: &[&Dataset],
) -> Result<(f64, f64, f64)> {
    let mode = if config.feedback {
        FeedbackEvalMode::OwnPrediction
    } else {
        FeedbackEvalMode::NotApplicable
    };
    let mut probs = Vec::new();
    let mut labels = Vec::new();
    for ds in datasets {
        let steps = stream_predictions(config, params, ds, Split::Val, mode, false, 0.5)?;
        probs.extend(steps.iter().map(|s| s.prob));
        labels.extend(steps.iter().map(|s| s.label));
    }
    let m = f1_metrics(&probs, &labels, 0.5)?;
    Ok((m.precision, m.recall, m.f1))
}

/// Trains until `max_epochs` or the early stop, returning the checkpoint
/// with the best validation F1 and the per-epoch log. Datasets must already
/// be split and normalized; batches are drawn jointly across all of them.
pub fn fit(
    config: &ModelConfig,
    datasets: &[&Dataset],
    train: &TrainConfig,
) -> Result<(Checkpoint, Vec<EpochRecord>)> {
    config.validate()?;
    train.validate()?;
    if datasets.is_empty() {
        return Err(Error::Contract("no datasets".into()));
    }
    for ds in datasets {
        if ds.norm_stats().is_none() {
            return Err(Error::Contract(format!(
                "dataset {} is not normalized",
                ds.name
            )));
        }
        if ds.d_input() != config.d_input {
            return Err(Error::Dimension(format!(
                "dataset {} has d_input {}, model expects {}",
                ds.name,
                ds.d_input(),
                config.d_input
            )));
        }
    }
    let l = config.window_len;
    let train_windows: Vec<Vec<WindowRef>> = datasets
        .iter()
        .map(|ds| windows_in_split(ds, l, Split::Train))
        .collect::<Result<_>>()?;
    if train_windows.iter().any(Vec::is_empty) {
        return Err(Error::Contract("a training split holds no windows".into()));
    }

    let mut params = init_params(config, train.seed)?;
    let mut opt = OptimizerState::new();
    let mut log = Vec::new();
    let mut best: Option<Parameters> = None;
    let mut stopper = EarlyStop::new(train.patience);

    for epoch in 1..=train.max_epochs {
        let started = Instant::now();
        let teacher_forcing = train.teacher_forcing_at(epoch);
        let batches = joint_schedule(
            datasets,
            &train_windows,
            train.batch_size,
            train.seed,
            epoch as u64,
        )?;
        let mut noise_rng = ChaCha8Rng::seed_from_u64(
            train.seed ^ (epoch as u64).wrapping_mul(0xA076_1D64_78BD_642F),
        );
        let mut loss_sum = 0.0;
        let mut window_count = 0usize;
        for batch in &batches {
            let ds = datasets[batch.dataset];
            let materialized: Vec<MonitoringWindow> = batch
                .windows
                .iter()
                .map(|&w| materialize(ds, w, l))
                .collect();
            // own-prediction epochs perturb some window boundaries so the
            // model learns to recover from a wrong chain state
            let boundaries: Option<Vec<f64>> = if config.feedback && !teacher_forcing {
                Some(
                    materialized
                        .iter()
                        .map(|w| {
                            if noise_rng.gen_bool(BOUNDARY_NOISE_P) {
                                noise_rng.gen_range(0.0..=1.0)
                            } else {
                                f64::from(w.prev_labels[0])
                            }
                        })
                        .collect(),
                )
            } else {
                None
            };
            let feedback = if teacher_forcing {
                StepFeedback::TeacherForcing
            } else {
                StepFeedback::OwnPrediction {
                    boundaries: boundaries.as_deref(),
                }
            };
            let loss = train_step(
                config,
                &mut params,
                &mut opt,
                &materialized,
                feedback,
                train.learning_rate,
            )?;
            loss_sum += loss * materialized.len() as f64;
            window_count += materialized.len();
        }
        let train_loss = loss_sum / window_count as f64;

        let (val_precision, val_recall, val_f1) = validation_f1(config, &params, datasets)?;
        log.push(EpochRecord {
            epoch,
            train_loss,
            val_precision,
            val_recall,
            val_f1,
            wall_ms: started.elapsed().as_millis() as u64,
        });

        let (improved, stop) = stopper.observe(val_f1);
        if improved {
            best = Some(params.clone());
        }
        if stop {
            break;
        }
    }

    let best_params = best.expect("at least one epoch ran");
    let norm_stats = datasets
        .iter()
        .map(|ds| {
            (
                ds.name.clone(),
                ds.norm_stats().expect("validated above").clone(),
            )
        })
        .collect();
    let checkpoint = Checkpoint {
        format_version: CHECKPOINT_VERSION,
        config: config.clone(),
        params: best_params,
        norm_stats,
        seeds: SeedLineage {
            init: train.seed,
            train: train.seed,
        },
    };
    Ok((checkpoint, log))
}
