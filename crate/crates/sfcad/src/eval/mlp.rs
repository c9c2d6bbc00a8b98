//! Flat MLP baseline: two ReLU hidden layers on the flattened current frame.
//!
//! No window, no sequence encoder — the non-sequential reference point. Its
//! input width is `V * d_input`, which is why one parameter set cannot serve
//! chains of different lengths.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Split};
use crate::error::{Error, Result};
use crate::model::Parameters;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;
use crate::train::adam::OptimizerState;
use crate::train::EpochRecord;

use super::stream::StepPrediction;
use super::f1_metrics;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpHyperparams {
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
}

impl Default for MlpHyperparams {
    fn default() -> Self {
        MlpHyperparams {
            hidden: vec![64, 32],
            learning_rate: 1e-3,
            batch_size: 64,
            max_epochs: 15,
            patience: 3,
            seed: 1,
        }
    }
}

/// Trained baseline: weights plus the input geometry they were built for.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub v: usize,
    pub d_input: usize,
    pub hidden: Vec<usize>,
    pub params: Parameters,
}

impl MlpModel {
    pub fn param_count(&self) -> usize {
        self.params.count()
    }
}

fn init_mlp(v: usize, d_input: usize, hidden: &[usize], seed: u64) -> Parameters {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut entries = BTreeMap::new();
    let mut push = |name: String, rows: usize, cols: usize, rng: &mut ChaCha8Rng, zero: bool| {
        let values = if zero {
            vec![0.0; rows * cols]
        } else {
            let bound = (1.0 / rows as f64).sqrt();
            (0..rows * cols).map(|_| rng.gen_range(-bound..bound)).collect()
        };
        entries.insert(name, Tensor::new(vec![rows, cols], values).expect("shape"));
    };
    let mut prev = v * d_input;
    for (i, &w) in hidden.iter().enumerate() {
        push(format!("mlp.l{i}.w"), prev, w, &mut rng, false);
        push(format!("mlp.l{i}.b"), 1, w, &mut rng, true);
        prev = w;
    }
    push("mlp.out.w".into(), prev, 1, &mut rng, false);
    push("mlp.out.b".into(), 1, 1, &mut rng, true);
    Parameters::from_entries(entries)
}

fn mlp_logit(
    tape: &mut Tape,
    params_vars: &BTreeMap<String, Var>,
    hidden_layers: usize,
    frame: &Tensor,
) -> Result<Var> {
    let flat = Tensor::new(vec![1, frame.numel()], frame.values().to_vec())?;
    let mut cur = tape.leaf(&flat, false);
    for i in 0..hidden_layers {
        let w = params_vars[&format!("mlp.l{i}.w")];
        let b = params_vars[&format!("mlp.l{i}.b")];
        let lin = tape.linear(cur, w, b)?;
        cur = tape.relu(lin);
    }
    tape.linear(cur, params_vars["mlp.out.w"], params_vars["mlp.out.b"])
}

/// Probability that the frame's step is anomalous.
pub fn mlp_predict(model: &MlpModel, frame: &Tensor) -> Result<f64> {
    if frame.rows() != model.v || frame.cols() != model.d_input {
        return Err(Error::Dimension(format!(
            "frame is {}x{}, baseline expects {}x{}",
            frame.rows(),
            frame.cols(),
            model.v,
            model.d_input
        )));
    }
    let mut tape = Tape::new();
    let vars: BTreeMap<String, Var> = model
        .params
        .iter()
        .map(|(n, t)| (n.clone(), tape.leaf(t, false)))
        .collect();
    let logit = mlp_logit(&mut tape, &vars, model.hidden.len(), frame)?;
    let prob = tape.sigmoid(logit);
    Ok(crate::model::clamp_prob(tape.scalar_value(prob)))
}

/// Per-step predictions over a split (frames are independent).
pub fn mlp_stream(model: &MlpModel, dataset: &Dataset, split: Split) -> Result<Vec<StepPrediction>> {
    let range = dataset.split_range(split)?;
    range
        .clone()
        .into_par_iter()
        .map(|t| {
            Ok(StepPrediction {
                time: t,
                label: dataset.label(t),
                prob: mlp_predict(model, dataset.frame(t))?,
            })
        })
        .collect()
}

/// Trains the baseline on one dataset (or several sharing the same V) with
/// the shared optimizer and early-stopping protocol.
pub fn train_mlp_baseline(
    datasets: &[&Dataset],
    hp: &MlpHyperparams,
) -> Result<(MlpModel, Vec<EpochRecord>)> {
    if datasets.is_empty() {
        return Err(Error::Contract("no datasets".into()));
    }
    let v = datasets[0].v();
    let d_input = datasets[0].d_input();
    if datasets.iter().any(|d| d.v() != v || d.d_input() != d_input) {
        return Err(Error::Contract(format!(
            "the flat baseline cannot joint-train across chain lengths \
             (flattened input width is V*d_input; got V={:?})",
            datasets.iter().map(|d| d.v()).collect::<Vec<_>>()
        )));
    }
    for ds in datasets {
        if ds.norm_stats().is_none() {
            return Err(Error::Contract(format!("dataset {} is not normalized", ds.name)));
        }
    }

    let mut params = init_mlp(v, d_input, &hp.hidden, hp.seed);
    let mut opt = OptimizerState::new();
    let names: Vec<String> = params.iter().map(|(n, _)| n.clone()).collect();
    let mut log = Vec::new();
    let mut best: Option<(f64, Parameters)> = None;
    let mut stale = 0usize;

    // (dataset idx, frame idx) pairs of every training frame
    let mut all: Vec<(usize, usize)> = Vec::new();
    for (i, ds) in datasets.iter().enumerate() {
        for t in ds.split_range(Split::Train)? {
            all.push((i, t));
        }
    }

    for epoch in 1..=hp.max_epochs {
        let started = std::time::Instant::now();
        let mut order = all.clone();
        use rand::seq::SliceRandom;
        let mut rng = ChaCha8Rng::seed_from_u64(hp.seed ^ (epoch as u64).wrapping_mul(0x9E37_79B9));
        order.shuffle(&mut rng);

        let mut loss_sum = 0.0;
        for chunk in order.chunks(hp.batch_size) {
            let per: Vec<(f64, Vec<Tensor>)> = chunk
                .par_iter()
                .map(|&(di, t)| -> Result<(f64, Vec<Tensor>)> {
                    let mut tape = Tape::new();
                    let vars: BTreeMap<String, Var> = params
                        .iter()
                        .map(|(n, ten)| (n.clone(), tape.leaf(ten, true)))
                        .collect();
                    let logit =
                        mlp_logit(&mut tape, &vars, hp.hidden.len(), datasets[di].frame(t))?;
                    let loss =
                        tape.bce_from_logit(logit, f64::from(datasets[di].label(t)))?;
                    let grads = tape.backward(loss)?;
                    Ok((
                        tape.scalar_value(loss),
                        vars.values().map(|&v| grads.of(v)).collect(),
                    ))
                })
                .collect::<Result<_>>()?;
            let scale = 1.0 / chunk.len() as f64;
            let mut sums: Vec<Vec<f64>> =
                per[0].1.iter().map(|t| vec![0.0; t.numel()]).collect();
            for (loss, grads) in &per {
                loss_sum += loss;
                for (s, g) in sums.iter_mut().zip(grads) {
                    for (a, &b) in s.iter_mut().zip(g.values()) {
                        *a += b;
                    }
                }
            }
            let mean: BTreeMap<String, Tensor> = names
                .iter()
                .zip(per[0].1.iter().zip(sums))
                .map(|(n, (proto, mut s))| {
                    for x in &mut s {
                        *x *= scale;
                    }
                    Ok((n.clone(), Tensor::new(proto.shape().to_vec(), s)?))
                })
                .collect::<Result<_>>()?;
            opt.apply(&mut params, &mean, hp.learning_rate)?;
        }
        let train_loss = loss_sum / all.len() as f64;

        let model = MlpModel {
            v,
            d_input,
            hidden: hp.hidden.clone(),
            params: params.clone(),
        };
        let mut probs = Vec::new();
        let mut labels = Vec::new();
        for ds in datasets {
            let steps = mlp_stream(&model, ds, Split::Val)?;
            probs.extend(steps.iter().map(|s| s.prob));
            labels.extend(steps.iter().map(|s| s.label));
        }
        let m = f1_metrics(&probs, &labels, 0.5)?;
        log.push(EpochRecord {
            epoch,
            train_loss,
            val_precision: m.precision,
            val_recall: m.recall,
            val_f1: m.f1,
            wall_ms: started.elapsed().as_millis() as u64,
        });

        let improved = best.as_ref().map_or(true, |(f1, _)| m.f1 > *f1);
        if improved {
            best = Some((m.f1, params.clone()));
            stale = 0;
        } else {
            stale += 1;
            if stale >= hp.patience {
                break;
            }
        }
    }

    let (_, best_params) = best.expect("at least one epoch");
    Ok((
        MlpModel {
            v,
            d_input,
            hidden: hp.hidden.clone(),
            params: best_params,
        },
        log,
    ))
}
