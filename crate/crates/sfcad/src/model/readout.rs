//! Pooling readouts: collapse the `V x d_z` encoder output into one vector.
//!
//! All three are invariant to permutations of the VNF rows; the attention
//! variant scores every position independently (`e_v = w' tanh(U z_v)`) so
//! the softmax weights permute along with the rows.

use crate::error::{Error, Result};
use crate::tape::{Tape, Var};
use crate::tensor::Axis;

use super::{ReadoutKind, Staged};

pub fn apply_readout(
    tape: &mut Tape,
    kind: ReadoutKind,
    staged: &Staged,
    z: Var,
) -> Result<Var> {
    let (v, _) = tape.shape(z);
    if v == 0 {
        return Err(Error::Contract("readout over an empty sequence".into()));
    }
    match kind {
        ReadoutKind::Max => tape.max_rows(z),
        ReadoutKind::Mean => tape.mean_rows(z),
        ReadoutKind::SelfAttention => {
            let u = staged.var("readout.att.u")?;
            let w = staged.var("readout.att.w")?;
            let zu = tape.matmul(z, u)?;
            let act = tape.tanh(zu);
            let scores = tape.matmul(act, w)?; // [V x 1]
            let row = tape.transpose(scores); // [1 x V]
            let alpha = tape.softmax(row, Axis::Cols);
            tape.matmul(alpha, z) // weighted sum of rows
        }
    }
}
