//! Transformer encoder: learned positional embeddings, multi-head
//! self-attention and a position-wise feed-forward block per layer, with
//! residual connections and post-norm layer normalization.

use crate::error::{Error, Result};
use crate::tape::{Tape, Var};
use crate::tensor::Axis;

use super::{ModelConfig, Staged, V_MAX};

const LN_EPS: f64 = 1e-5;

/// Attention probabilities captured during a forward pass.
pub struct AttnRecord {
    pub layer: usize,
    pub head: usize,
    /// `V x V` row-stochastic matrix on the tape.
    pub probs: Var,
}

pub fn encode_transformer(
    tape: &mut Tape,
    config: &ModelConfig,
    staged: &Staged,
    x: Var,
) -> Result<(Var, Vec<AttnRecord>)> {
    let (v, d) = tape.shape(x);
    if v > V_MAX {
        return Err(Error::Capacity(format!(
            "chain length {v} exceeds the positional table ({V_MAX})"
        )));
    }
    let pos_table = staged.var("enc.pos")?;
    let pos = tape.slice_rows(pos_table, 0, v)?;
    let mut cur = tape.add(x, pos)?;

    let heads = config.n_heads;
    let head_dim = config.head_dim();
    let scale = 1.0 / (head_dim as f64).sqrt();
    let mut records = Vec::new();

    for layer in 0..config.n_enc_layers {
        let p = |w: &str| format!("enc.l{layer}.{w}");

        let w_q = staged.var(&p("attn.w_q"))?;
        let w_k = staged.var(&p("attn.w_k"))?;
        let w_v = staged.var(&p("attn.w_v"))?;
        let w_o = staged.var(&p("attn.w_o"))?;
        let q = tape.matmul(cur, w_q)?;
        let k = tape.matmul(cur, w_k)?;
        let val = tape.matmul(cur, w_v)?;

        let mut head_outputs = Vec::with_capacity(heads);
        for head in 0..heads {
            let off = head * head_dim;
            let qh = tape.slice_cols(q, off, head_dim)?;
            let kh = tape.slice_cols(k, off, head_dim)?;
            let vh = tape.slice_cols(val, off, head_dim)?;
            let kt = tape.transpose(kh);
            let raw = tape.matmul(qh, kt)?;
            let scaled = tape.scale(raw, scale);
            let probs = tape.softmax(scaled, Axis::Cols);
            records.push(AttnRecord { layer, head, probs });
            head_outputs.push(tape.matmul(probs, vh)?);
        }
        let merged = tape.concat(&head_outputs, Axis::Cols)?;
        let attn_out = tape.matmul(merged, w_o)?;

        let res1 = tape.add(cur, attn_out)?;
        let g1 = staged.var(&p("ln1.gamma"))?;
        let b1 = staged.var(&p("ln1.beta"))?;
        let normed1 = tape.layer_norm(res1, g1, b1, LN_EPS)?;

        let fw1 = staged.var(&p("ffn.w1"))?;
        let fb1 = staged.var(&p("ffn.b1"))?;
        let fw2 = staged.var(&p("ffn.w2"))?;
        let fb2 = staged.var(&p("ffn.b2"))?;
        let inner = tape.linear(normed1, fw1, fb1)?;
        let act = tape.relu(inner);
        let ffn_out = tape.linear(act, fw2, fb2)?;

        let res2 = tape.add(normed1, ffn_out)?;
        let g2 = staged.var(&p("ln2.gamma"))?;
        let b2 = staged.var(&p("ln2.beta"))?;
        cur = tape.layer_norm(res2, g2, b2, LN_EPS)?;
    }
    debug_assert_eq!(tape.shape(cur), (v, d));
    Ok((cur, records))
}
