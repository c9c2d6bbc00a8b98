//! Adam with bias correction over named parameter tensors.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Parameters;
use crate::tensor::Tensor;

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPS: f64 = 1e-8;

/// First/second moment accumulators plus the step counter.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct OptimizerState {
    m: BTreeMap<String, Vec<f64>>,
    v: BTreeMap<String, Vec<f64>>,
    step: u64,
}

impl OptimizerState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One Adam update from gradients aligned with the parameter names.
    pub fn apply(
        &mut self,
        params: &mut Parameters,
        grads: &BTreeMap<String, Tensor>,
        learning_rate: f64,
    ) -> Result<()> {
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - BETA1.powi(t);
        let bc2 = 1.0 - BETA2.powi(t);
        for (name, tensor) in params.iter_mut() {
            let grad = grads
                .get(name)
                .ok_or_else(|| Error::Contract(format!("no gradient for parameter {name}")))?;
            if grad.shape() != tensor.shape() {
                return Err(Error::Dimension(format!(
                    "gradient for {name} is {:?}, parameter is {:?}",
                    grad.shape(),
                    tensor.shape()
                )));
            }
            let n = tensor.numel();
            let m = self.m.entry(name.clone()).or_insert_with(|| vec![0.0; n]);
            let v = self.v.entry(name.clone()).or_insert_with(|| vec![0.0; n]);
            let mut values = tensor.values().to_vec();
            for i in 0..n {
                let g = grad.values()[i];
                m[i] = BETA1 * m[i] + (1.0 - BETA1) * g;
                v[i] = BETA2 * v[i] + (1.0 - BETA2) * g * g;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                values[i] -= learning_rate * m_hat / (v_hat.sqrt() + EPS);
            }
            *tensor = Tensor::new(tensor.shape().to_vec(), values)?;
        }
        Ok(())
    }
}
