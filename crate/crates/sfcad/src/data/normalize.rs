//! Per-feature z-score statistics pooled over time steps and VNF positions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Per-feature mean and standard deviation from a training split. Features
/// whose spread is indistinguishable from rounding are flagged constant and
/// normalize to zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub constant: Vec<bool>,
}

impl NormStats {
    pub fn from_frames(frames: &[Tensor]) -> Result<Self> {
        if frames.is_empty() {
            return Err(Error::Contract("no frames to compute statistics from".into()));
        }
        let d = frames[0].cols();
        let rows: usize = frames.iter().map(Tensor::rows).sum();
        let mut mean = vec![0.0; d];
        for f in frames {
            for r in 0..f.rows() {
                for (m, &x) in mean.iter_mut().zip(f.row_slice(r)) {
                    *m += x;
                }
            }
        }
        for m in &mut mean {
            *m /= rows as f64;
        }
        let mut var = vec![0.0; d];
        for f in frames {
            for r in 0..f.rows() {
                for ((v, &m), &x) in var.iter_mut().zip(&mean).zip(f.row_slice(r)) {
                    let dlt = x - m;
                    *v += dlt * dlt;
                }
            }
        }
        let mut std = Vec::with_capacity(d);
        let mut constant = Vec::with_capacity(d);
        for (j, v) in var.iter().enumerate() {
            let s = (v / rows as f64).sqrt();
            let is_const = s <= 1e-9 * mean[j].abs().max(1.0);
            constant.push(is_const);
            std.push(if is_const { 0.0 } else { s });
        }
        Ok(NormStats {
            mean,
            std,
            constant,
        })
    }

    /// `(x - mean) / std` per column; constant columns become 0.
    pub fn apply(&self, frame: &Tensor) -> Result<Tensor> {
        if frame.cols() != self.mean.len() {
            return Err(Error::Dimension(format!(
                "frame width {} does not match statistics over {} features",
                frame.cols(),
                self.mean.len()
            )));
        }
        let d = self.mean.len();
        let mut values = Vec::with_capacity(frame.numel());
        for r in 0..frame.rows() {
            for (j, &x) in frame.row_slice(r).iter().enumerate() {
                values.push(if self.constant[j] {
                    0.0
                } else {
                    (x - self.mean[j]) / self.std[j]
                });
            }
        }
        Tensor::new(vec![frame.rows(), d], values)
    }
}
