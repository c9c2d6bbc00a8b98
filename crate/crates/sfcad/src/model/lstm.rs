//! LSTM cell primitives shared by the encoder and the temporal classifier.

use crate::error::Result;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

use super::Staged;

/// Handles to one LSTM cell's staged weights. Gate blocks are laid out
/// `[input | forget | cell | output]`, each `hidden` wide.
pub struct LstmVars {
    pub w_x: Var,
    pub w_h: Var,
    pub b: Var,
}

impl LstmVars {
    pub fn stage(staged: &Staged, prefix: &str) -> Result<Self> {
        Ok(Self {
            w_x: staged.var(&format!("{prefix}.w_x"))?,
            w_h: staged.var(&format!("{prefix}.w_h"))?,
            b: staged.var(&format!("{prefix}.b"))?,
        })
    }
}

/// One LSTM step: takes `x` (`1 x in`), previous `(h, c)`, returns the next.
pub fn lstm_step(tape: &mut Tape, cell: &LstmVars, x: Var, h: Var, c: Var) -> Result<(Var, Var)> {
    let hidden = tape.shape(cell.w_h).0;
    let xw = tape.matmul(x, cell.w_x)?;
    let hw = tape.matmul(h, cell.w_h)?;
    let pre = tape.add(xw, hw)?;
    let gates = tape.add(pre, cell.b)?;

    let i_raw = tape.slice_cols(gates, 0, hidden)?;
    let f_raw = tape.slice_cols(gates, hidden, hidden)?;
    let g_raw = tape.slice_cols(gates, 2 * hidden, hidden)?;
    let o_raw = tape.slice_cols(gates, 3 * hidden, hidden)?;

    let i = tape.sigmoid(i_raw);
    let f = tape.sigmoid(f_raw);
    let g = tape.tanh(g_raw);
    let o = tape.sigmoid(o_raw);

    let fc = tape.mul(f, c)?;
    let ig = tape.mul(i, g)?;
    let c_next = tape.add(fc, ig)?;
    let ct = tape.tanh(c_next);
    let h_next = tape.mul(o, ct)?;
    Ok((h_next, c_next))
}

/// Runs the cell from zero state over `inputs`, returning the hidden state
/// after each step.
pub fn lstm_sequence(tape: &mut Tape, cell: &LstmVars, inputs: &[Var]) -> Result<Vec<Var>> {
    let hidden = tape.shape(cell.w_h).0;
    let zero = Tensor::zeros(vec![1, hidden]);
    let mut h = tape.leaf(&zero, false);
    let mut c = tape.leaf(&zero, false);
    let mut states = Vec::with_capacity(inputs.len());
    for &x in inputs {
        let (nh, nc) = lstm_step(tape, cell, x, h, c)?;
        h = nh;
        c = nc;
        states.push(h);
    }
    Ok(states)
}
