//! Central-difference verification of reverse-mode gradients.

use crate::error::Result;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Compares the tape gradient of a scalar-valued function against central
/// finite differences, coordinate by coordinate.
///
/// `build` must deterministically construct the loss from its parameter
/// leaves. Returns the maximum over all coordinates of
/// `|analytic - fd| / max(|analytic|, |fd|, 1e-8)`.
pub fn grad_check<F>(build: F, params: &[Tensor], epsilon: f64) -> Result<f64>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let eval = |values: &[Tensor]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = values.iter().map(|t| tape.leaf(t, false)).collect();
        let loss = build(&mut tape, &vars)?;
        Ok(tape.scalar_value(loss))
    };

    // Analytic gradients from one recorded tape.
    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|t| tape.leaf(t, true)).collect();
    let loss = build(&mut tape, &vars)?;
    let grads = tape.backward(loss)?;

    let mut worst = 0.0_f64;
    let mut work: Vec<Tensor> = params.to_vec();
    for (p, var) in vars.iter().enumerate() {
        let analytic = grads.of(*var);
        for i in 0..params[p].numel() {
            let base = params[p].values()[i];

            let mut bump = |x: f64, work: &mut Vec<Tensor>| -> Result<f64> {
                let mut vals = work[p].values().to_vec();
                vals[i] = x;
                work[p] = Tensor::new(work[p].shape().to_vec(), vals)?;
                eval(work)
            };
            let plus = bump(base + epsilon, &mut work)?;
            let minus = bump(base - epsilon, &mut work)?;
            bump(base, &mut work)?; // restore

            let fd = (plus - minus) / (2.0 * epsilon);
            let a = analytic.values()[i];
            let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-8);
            if rel > worst {
                worst = rel;
            }
        }
    }
    Ok(worst)
}
