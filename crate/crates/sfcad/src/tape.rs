//! Reverse-mode automatic differentiation over 2-D tensors.
//!
//! A [`Tape`] records every primitive applied to its values in order; a single
//! [`Tape::backward`] sweep replays the record in exact reverse, accumulating
//! gradients for each leaf created with `requires_grad`. One tape is confined
//! to one thread for its whole record/replay lifetime; parallelism happens
//! across independent tapes.

use crate::error::{Error, Result};
use crate::tensor::{Axis, Tensor};

/// Handle to a value on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf { requires_grad: bool },
    MatMul { a: usize, b: usize },
    Add { a: usize, b: usize },
    Sub { a: usize, b: usize },
    Mul { a: usize, b: usize },
    Scale { a: usize, c: f64 },
    Sigmoid { a: usize },
    Tanh { a: usize },
    Relu { a: usize },
    Concat { parts: Vec<usize>, axis: Axis },
    SliceRows { a: usize, start: usize, len: usize },
    SliceCols { a: usize, start: usize, len: usize },
    Transpose { a: usize },
    Softmax { a: usize, axis: Axis },
    MaxRows { a: usize },
    MeanRows { a: usize },
    SumAll { a: usize },
    TileRows { a: usize, n: usize },
    LayerNorm { a: usize, gamma: usize, beta: usize, eps: f64 },
    BceFromLogit { logit: usize, target: f64 },
}

struct Node {
    op: Op,
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

/// Numerically stable logistic function.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Gradient record produced by [`Tape::backward`].
pub struct Gradients {
    shapes: Vec<(usize, usize)>,
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    /// Gradient of the loss w.r.t. `v`. Vars the loss does not depend on get
    /// a zero tensor of their shape.
    pub fn of(&self, v: Var) -> Tensor {
        let (r, c) = self.shapes[v.0];
        match &self.grads[v.0] {
            Some(g) => Tensor::new(vec![r, c], g.clone()).expect("gradient shape"),
            None => Tensor::zeros(vec![r, c]),
        }
    }
}

/// Operation record with reverse-mode replay.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

fn matmul_raw(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, out: &mut [f64]) {
    for i in 0..m {
        let ar = &a[i * k..(i + 1) * k];
        let or = &mut out[i * n..(i + 1) * n];
        for (p, &av) in ar.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let br = &b[p * n..(p + 1) * n];
            for (o, &bv) in or.iter_mut().zip(br) {
                *o += av * bv;
            }
        }
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, op: Op, rows: usize, cols: usize, values: Vec<f64>) -> Var {
        debug_assert_eq!(values.len(), rows * cols);
        self.nodes.push(Node {
            op,
            rows,
            cols,
            values,
        });
        Var(self.nodes.len() - 1)
    }

    fn node(&self, v: Var) -> &Node {
        &self.nodes[v.0]
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        let n = self.node(v);
        (n.rows, n.cols)
    }

    pub fn values(&self, v: Var) -> &[f64] {
        &self.node(v).values
    }

    /// Copies the current value of `v` out of the tape.
    pub fn value(&self, v: Var) -> Tensor {
        let n = self.node(v);
        Tensor::new(vec![n.rows, n.cols], n.values.clone()).expect("node shape")
    }

    pub fn scalar_value(&self, v: Var) -> f64 {
        self.node(v).values[0]
    }

    /// Registers an input value. Only leaves may receive gradients.
    pub fn leaf(&mut self, t: &Tensor, requires_grad: bool) -> Var {
        self.push(
            Op::Leaf { requires_grad },
            t.rows(),
            t.cols(),
            t.values().to_vec(),
        )
    }

    pub fn constant(&mut self, v: f64) -> Var {
        self.push(Op::Leaf { requires_grad: false }, 1, 1, vec![v])
    }

    /// Standard matrix product `a[m×k] · b[k×n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.shape(a);
        let (k2, n) = self.shape(b);
        if k != k2 {
            return Err(Error::Dimension(format!(
                "matmul inner extents disagree: [{m}x{k}] x [{k2}x{n}]"
            )));
        }
        let mut out = vec![0.0; m * n];
        matmul_raw(&self.node(a).values, &self.node(b).values, m, k, n, &mut out);
        Ok(self.push(Op::MatMul { a: a.0, b: b.0 }, m, n, out))
    }

    fn broadcast_pair(&self, a: Var, b: Var, what: &str) -> Result<(usize, usize)> {
        let sa = self.shape(a);
        let sb = self.shape(b);
        if sa == sb {
            Ok(sa)
        } else if sb == (1, 1) {
            Ok(sa)
        } else if sa == (1, 1) {
            Ok(sb)
        } else {
            Err(Error::Dimension(format!(
                "{what}: shapes [{}x{}] and [{}x{}] are neither equal nor scalar",
                sa.0, sa.1, sb.0, sb.1
            )))
        }
    }

    fn zip_broadcast(&self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
        let va = &self.node(a).values;
        let vb = &self.node(b).values;
        if va.len() == vb.len() {
            va.iter().zip(vb).map(|(&x, &y)| f(x, y)).collect()
        } else if vb.len() == 1 {
            va.iter().map(|&x| f(x, vb[0])).collect()
        } else {
            vb.iter().map(|&y| f(va[0], y)).collect()
        }
    }

    /// Elementwise sum; operands must match exactly or one must be scalar.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (r, c) = self.broadcast_pair(a, b, "add")?;
        let out = self.zip_broadcast(a, b, |x, y| x + y);
        Ok(self.push(Op::Add { a: a.0, b: b.0 }, r, c, out))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let (r, c) = self.broadcast_pair(a, b, "sub")?;
        let out = self.zip_broadcast(a, b, |x, y| x - y);
        Ok(self.push(Op::Sub { a: a.0, b: b.0 }, r, c, out))
    }

    /// Elementwise (Hadamard) product under the same broadcast rule as `add`.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (r, c) = self.broadcast_pair(a, b, "mul")?;
        let out = self.zip_broadcast(a, b, |x, y| x * y);
        Ok(self.push(Op::Mul { a: a.0, b: b.0 }, r, c, out))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let (r, cl) = self.shape(a);
        let out = self.node(a).values.iter().map(|&x| x * c).collect();
        self.push(Op::Scale { a: a.0, c }, r, cl, out)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let (r, c) = self.shape(a);
        let out = self.node(a).values.iter().map(|&x| sigmoid(x)).collect();
        self.push(Op::Sigmoid { a: a.0 }, r, c, out)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let (r, c) = self.shape(a);
        let out = self.node(a).values.iter().map(|&x| x.tanh()).collect();
        self.push(Op::Tanh { a: a.0 }, r, c, out)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let (r, c) = self.shape(a);
        let out = self.node(a).values.iter().map(|&x| x.max(0.0)).collect();
        self.push(Op::Relu { a: a.0 }, r, c, out)
    }

    /// Joins tensors along `axis`; the other extent must agree across parts.
    pub fn concat(&mut self, parts: &[Var], axis: Axis) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::Contract("concat of zero tensors".into()));
        }
        match axis {
            Axis::Rows => {
                let cols = self.shape(parts[0]).1;
                let mut rows = 0;
                let mut values = Vec::new();
                for &p in parts {
                    let (r, c) = self.shape(p);
                    if c != cols {
                        return Err(Error::Dimension(format!(
                            "concat rows: column extents disagree ({cols} vs {c})"
                        )));
                    }
                    rows += r;
                    values.extend_from_slice(&self.node(p).values);
                }
                Ok(self.push(
                    Op::Concat {
                        parts: parts.iter().map(|v| v.0).collect(),
                        axis,
                    },
                    rows,
                    cols,
                    values,
                ))
            }
            Axis::Cols => {
                let rows = self.shape(parts[0]).0;
                let mut cols = 0;
                for &p in parts {
                    let (r, c) = self.shape(p);
                    if r != rows {
                        return Err(Error::Dimension(format!(
                            "concat cols: row extents disagree ({rows} vs {r})"
                        )));
                    }
                    cols += c;
                }
                let mut values = vec![0.0; rows * cols];
                let mut offset = 0;
                for &p in parts {
                    let (_, c) = self.shape(p);
                    let src = &self.node(p).values;
                    for r in 0..rows {
                        values[r * cols + offset..r * cols + offset + c]
                            .copy_from_slice(&src[r * c..(r + 1) * c]);
                    }
                    offset += c;
                }
                Ok(self.push(
                    Op::Concat {
                        parts: parts.iter().map(|v| v.0).collect(),
                        axis,
                    },
                    rows,
                    cols,
                    values,
                ))
            }
        }
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let (r, c) = self.shape(a);
        if start + len > r {
            return Err(Error::Dimension(format!(
                "slice_rows {start}..{} out of {r} rows",
                start + len
            )));
        }
        let values = self.node(a).values[start * c..(start + len) * c].to_vec();
        Ok(self.push(Op::SliceRows { a: a.0, start, len }, len, c, values))
    }

    pub fn row(&mut self, a: Var, index: usize) -> Result<Var> {
        self.slice_rows(a, index, 1)
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let (r, c) = self.shape(a);
        if start + len > c {
            return Err(Error::Dimension(format!(
                "slice_cols {start}..{} out of {c} columns",
                start + len
            )));
        }
        let src = &self.node(a).values;
        let mut values = Vec::with_capacity(r * len);
        for i in 0..r {
            values.extend_from_slice(&src[i * c + start..i * c + start + len]);
        }
        Ok(self.push(Op::SliceCols { a: a.0, start, len }, r, len, values))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let (r, c) = self.shape(a);
        let src = &self.node(a).values;
        let mut values = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                values[j * r + i] = src[i * c + j];
            }
        }
        self.push(Op::Transpose { a: a.0 }, c, r, values)
    }

    /// Softmax along `axis`, computed with max-subtraction. Summing the
    /// output over `axis` yields 1 for every line.
    pub fn softmax(&mut self, a: Var, axis: Axis) -> Var {
        let (r, c) = self.shape(a);
        let src = &self.node(a).values;
        let mut values = vec![0.0; r * c];
        match axis {
            Axis::Cols => {
                for i in 0..r {
                    softmax_line(&src[i * c..(i + 1) * c], &mut values[i * c..(i + 1) * c], 1);
                }
            }
            Axis::Rows => {
                for j in 0..c {
                    let col: Vec<f64> = (0..r).map(|i| src[i * c + j]).collect();
                    let mut out = vec![0.0; r];
                    softmax_line(&col, &mut out, 1);
                    for i in 0..r {
                        values[i * c + j] = out[i];
                    }
                }
            }
        }
        self.push(Op::Softmax { a: a.0, axis }, r, c, values)
    }

    /// Coordinate-wise maximum over rows: `[V×d] -> [1×d]`.
    pub fn max_rows(&mut self, a: Var) -> Result<Var> {
        let (r, c) = self.shape(a);
        if r == 0 {
            return Err(Error::Contract("max_rows over empty sequence".into()));
        }
        let src = &self.node(a).values;
        let mut values = src[..c].to_vec();
        for i in 1..r {
            for j in 0..c {
                if src[i * c + j] > values[j] {
                    values[j] = src[i * c + j];
                }
            }
        }
        Ok(self.push(Op::MaxRows { a: a.0 }, 1, c, values))
    }

    /// Coordinate-wise mean over rows: `[V×d] -> [1×d]`. Columns are summed
    /// with Neumaier compensation so the result does not depend on row order.
    pub fn mean_rows(&mut self, a: Var) -> Result<Var> {
        let (r, c) = self.shape(a);
        if r == 0 {
            return Err(Error::Contract("mean_rows over empty sequence".into()));
        }
        let src = &self.node(a).values;
        let mut values = vec![0.0; c];
        for (j, v) in values.iter_mut().enumerate() {
            *v = neumaier_sum((0..r).map(|i| src[i * c + j])) / r as f64;
        }
        Ok(self.push(Op::MeanRows { a: a.0 }, 1, c, values))
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let s: f64 = self.node(a).values.iter().sum();
        self.push(Op::SumAll { a: a.0 }, 1, 1, vec![s])
    }

    /// Repeats a `[1×k]` row `n` times into `[n×k]`.
    pub fn tile_rows(&mut self, a: Var, n: usize) -> Result<Var> {
        let (r, c) = self.shape(a);
        if r != 1 {
            return Err(Error::Dimension(format!(
                "tile_rows expects a single row, got [{r}x{c}]"
            )));
        }
        let src = &self.node(a).values;
        let mut values = Vec::with_capacity(n * c);
        for _ in 0..n {
            values.extend_from_slice(src);
        }
        Ok(self.push(Op::TileRows { a: a.0, n }, n, c, values))
    }

    /// Per-row layer normalization with learned gain/shift `[1×d]`.
    pub fn layer_norm(&mut self, a: Var, gamma: Var, beta: Var, eps: f64) -> Result<Var> {
        let (r, c) = self.shape(a);
        if self.shape(gamma) != (1, c) || self.shape(beta) != (1, c) {
            return Err(Error::Dimension(format!(
                "layer_norm gain/shift must be [1x{c}]"
            )));
        }
        let src = &self.node(a).values;
        let g = &self.node(gamma).values;
        let b = &self.node(beta).values;
        let mut values = vec![0.0; r * c];
        for i in 0..r {
            let row = &src[i * c..(i + 1) * c];
            let mean = row.iter().sum::<f64>() / c as f64;
            let var = row.iter().map(|&x| (x - mean) * (x - mean)).sum::<f64>() / c as f64;
            let inv_std = 1.0 / (var + eps).sqrt();
            for j in 0..c {
                values[i * c + j] = (row[j] - mean) * inv_std * g[j] + b[j];
            }
        }
        Ok(self.push(
            Op::LayerNorm {
                a: a.0,
                gamma: gamma.0,
                beta: beta.0,
                eps,
            },
            r,
            c,
            values,
        ))
    }

    /// Binary cross-entropy against `target` taking the raw logit, computed
    /// in the overflow-free form `max(z,0) - z*y + ln(1 + e^{-|z|})`.
    pub fn bce_from_logit(&mut self, logit: Var, target: f64) -> Result<Var> {
        if self.shape(logit) != (1, 1) {
            return Err(Error::Contract("bce_from_logit expects a scalar logit".into()));
        }
        if !(0.0..=1.0).contains(&target) {
            return Err(Error::Contract(format!("target {target} outside [0,1]")));
        }
        let z = self.node(logit).values[0];
        let loss = z.max(0.0) - z * target + (-z.abs()).exp().ln_1p();
        Ok(self.push(
            Op::BceFromLogit {
                logit: logit.0,
                target,
            },
            1,
            1,
            vec![loss],
        ))
    }

    /// Affine map `x·w + b` with the bias row broadcast over rows of `x`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let xw = self.matmul(x, w)?;
        let (rows, _) = self.shape(xw);
        let tiled = if rows == 1 { b } else { self.tile_rows(b, rows)? };
        self.add(xw, tiled)
    }

    /// Reverse sweep from a scalar loss. Returns gradients for every leaf
    /// recorded with `requires_grad`; leaves the loss does not reach get
    /// zeros.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let n = self.nodes.len();
        if self.shape(loss) != (1, 1) {
            let (r, c) = self.shape(loss);
            return Err(Error::Contract(format!(
                "backward requires a scalar loss, got [{r}x{c}]"
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; n];
        grads[loss.0] = Some(vec![1.0]);

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Leaf { requires_grad } => {
                    if *requires_grad {
                        grads[i] = Some(g);
                    }
                    continue;
                }
                Op::MatMul { a, b } => {
                    let (m, k) = (self.nodes[*a].rows, self.nodes[*a].cols);
                    let nn = self.nodes[*b].cols;
                    // dA = G · Bᵀ
                    {
                        let bt = transpose_raw(&self.nodes[*b].values, k, nn);
                        let da = acc(&mut grads, *a, m * k);
                        matmul_raw(&g, &bt, m, nn, k, da);
                    }
                    // dB = Aᵀ · G
                    {
                        let at = transpose_raw(&self.nodes[*a].values, m, k);
                        let db = acc(&mut grads, *b, k * nn);
                        matmul_raw(&at, &g, k, m, nn, db);
                    }
                }
                Op::Add { a, b } => {
                    spread(&mut grads, *a, self.nodes[*a].values.len(), &g, 1.0);
                    spread(&mut grads, *b, self.nodes[*b].values.len(), &g, 1.0);
                }
                Op::Sub { a, b } => {
                    spread(&mut grads, *a, self.nodes[*a].values.len(), &g, 1.0);
                    spread(&mut grads, *b, self.nodes[*b].values.len(), &g, -1.0);
                }
                Op::Mul { a, b } => {
                    let va = &self.nodes[*a].values;
                    let vb = &self.nodes[*b].values;
                    let ga: Vec<f64> = if vb.len() == g.len() {
                        g.iter().zip(vb).map(|(&gv, &y)| gv * y).collect()
                    } else {
                        g.iter().map(|&gv| gv * vb[0]).collect()
                    };
                    let gb: Vec<f64> = if va.len() == g.len() {
                        g.iter().zip(va).map(|(&gv, &x)| gv * x).collect()
                    } else {
                        g.iter().map(|&gv| gv * va[0]).collect()
                    };
                    spread(&mut grads, *a, va.len(), &ga, 1.0);
                    spread(&mut grads, *b, vb.len(), &gb, 1.0);
                }
                Op::Scale { a, c } => {
                    let da = acc(&mut grads, *a, g.len());
                    for (d, &gv) in da.iter_mut().zip(&g) {
                        *d += c * gv;
                    }
                }
                Op::Sigmoid { a } => {
                    let da = acc(&mut grads, *a, g.len());
                    for ((d, &gv), &s) in da.iter_mut().zip(&g).zip(&node.values) {
                        *d += gv * s * (1.0 - s);
                    }
                }
                Op::Tanh { a } => {
                    let da = acc(&mut grads, *a, g.len());
                    for ((d, &gv), &t) in da.iter_mut().zip(&g).zip(&node.values) {
                        *d += gv * (1.0 - t * t);
                    }
                }
                Op::Relu { a } => {
                    let xs = &self.nodes[*a].values;
                    let da = acc(&mut grads, *a, g.len());
                    for ((d, &gv), &x) in da.iter_mut().zip(&g).zip(xs) {
                        if x > 0.0 {
                            *d += gv;
                        }
                    }
                }
                Op::Concat { parts, axis } => match axis {
                    Axis::Rows => {
                        let cols = node.cols;
                        let mut row0 = 0;
                        for &p in parts {
                            let pr = self.nodes[p].rows;
                            let seg = &g[row0 * cols..(row0 + pr) * cols];
                            spread(&mut grads, p, pr * cols, seg, 1.0);
                            row0 += pr;
                        }
                    }
                    Axis::Cols => {
                        let rows = node.rows;
                        let cols = node.cols;
                        let mut col0 = 0;
                        for &p in parts {
                            let pc = self.nodes[p].cols;
                            let dp = acc(&mut grads, p, rows * pc);
                            for r in 0..rows {
                                for j in 0..pc {
                                    dp[r * pc + j] += g[r * cols + col0 + j];
                                }
                            }
                            col0 += pc;
                        }
                    }
                },
                Op::SliceRows { a, start, len } => {
                    let c = self.nodes[*a].cols;
                    let total = self.nodes[*a].values.len();
                    let da = acc(&mut grads, *a, total);
                    for r in 0..*len {
                        for j in 0..c {
                            da[(start + r) * c + j] += g[r * c + j];
                        }
                    }
                }
                Op::SliceCols { a, start, len } => {
                    let c = self.nodes[*a].cols;
                    let r_total = self.nodes[*a].rows;
                    let da = acc(&mut grads, *a, r_total * c);
                    for r in 0..r_total {
                        for j in 0..*len {
                            da[r * c + start + j] += g[r * len + j];
                        }
                    }
                }
                Op::Transpose { a } => {
                    let (r, c) = (node.rows, node.cols);
                    let da = acc(&mut grads, *a, r * c);
                    for i in 0..r {
                        for j in 0..c {
                            da[j * r + i] += g[i * c + j];
                        }
                    }
                }
                Op::Softmax { a, axis } => {
                    let (r, c) = (node.rows, node.cols);
                    let s = &node.values;
                    let da = acc(&mut grads, *a, r * c);
                    match axis {
                        Axis::Cols => {
                            for i in 0..r {
                                let dot: f64 = (0..c).map(|j| g[i * c + j] * s[i * c + j]).sum();
                                for j in 0..c {
                                    da[i * c + j] += s[i * c + j] * (g[i * c + j] - dot);
                                }
                            }
                        }
                        Axis::Rows => {
                            for j in 0..c {
                                let dot: f64 = (0..r).map(|i| g[i * c + j] * s[i * c + j]).sum();
                                for i in 0..r {
                                    da[i * c + j] += s[i * c + j] * (g[i * c + j] - dot);
                                }
                            }
                        }
                    }
                }
                Op::MaxRows { a } => {
                    let (r, c) = (self.nodes[*a].rows, self.nodes[*a].cols);
                    let xs = &self.nodes[*a].values;
                    let da = acc(&mut grads, *a, r * c);
                    for j in 0..c {
                        // gradient flows to the first row attaining the max
                        let mut best = 0;
                        for i in 1..r {
                            if xs[i * c + j] > xs[best * c + j] {
                                best = i;
                            }
                        }
                        da[best * c + j] += g[j];
                    }
                }
                Op::MeanRows { a } => {
                    let (r, c) = (self.nodes[*a].rows, self.nodes[*a].cols);
                    let da = acc(&mut grads, *a, r * c);
                    let inv = 1.0 / r as f64;
                    for i in 0..r {
                        for j in 0..c {
                            da[i * c + j] += g[j] * inv;
                        }
                    }
                }
                Op::SumAll { a } => {
                    let len = self.nodes[*a].values.len();
                    let da = acc(&mut grads, *a, len);
                    for d in da.iter_mut() {
                        *d += g[0];
                    }
                }
                Op::TileRows { a, n } => {
                    let c = self.nodes[*a].cols;
                    let da = acc(&mut grads, *a, c);
                    for r in 0..*n {
                        for j in 0..c {
                            da[j] += g[r * c + j];
                        }
                    }
                }
                Op::LayerNorm { a, gamma, beta, eps } => {
                    let (r, c) = (node.rows, node.cols);
                    let xs = &self.nodes[*a].values;
                    let gm = &self.nodes[*gamma].values;
                    let cf = c as f64;
                    let mut dx = vec![0.0; r * c];
                    let mut dgamma = vec![0.0; c];
                    let mut dbeta = vec![0.0; c];
                    for i in 0..r {
                        let row = &xs[i * c..(i + 1) * c];
                        let grow = &g[i * c..(i + 1) * c];
                        let mean = row.iter().sum::<f64>() / cf;
                        let var =
                            row.iter().map(|&x| (x - mean) * (x - mean)).sum::<f64>() / cf;
                        let inv_std = 1.0 / (var + eps).sqrt();
                        let xhat: Vec<f64> = row.iter().map(|&x| (x - mean) * inv_std).collect();
                        let dxhat: Vec<f64> =
                            grow.iter().zip(gm).map(|(&gv, &gam)| gv * gam).collect();
                        let sum_dxhat: f64 = dxhat.iter().sum();
                        let sum_dxhat_xhat: f64 =
                            dxhat.iter().zip(&xhat).map(|(&a, &b)| a * b).sum();
                        for j in 0..c {
                            dgamma[j] += grow[j] * xhat[j];
                            dbeta[j] += grow[j];
                            dx[i * c + j] += inv_std / cf
                                * (cf * dxhat[j] - sum_dxhat - xhat[j] * sum_dxhat_xhat);
                        }
                    }
                    spread(&mut grads, *a, r * c, &dx, 1.0);
                    spread(&mut grads, *gamma, c, &dgamma, 1.0);
                    spread(&mut grads, *beta, c, &dbeta, 1.0);
                }
                Op::BceFromLogit { logit, target } => {
                    let z = self.nodes[*logit].values[0];
                    let da = acc(&mut grads, *logit, 1);
                    da[0] += g[0] * (sigmoid(z) - target);
                }
            }
        }

        Ok(Gradients {
            shapes: self.nodes.iter().map(|n| (n.rows, n.cols)).collect(),
            grads,
        })
    }
}

/// Compensated summation; correctly rounded for well-scaled inputs, which
/// makes the result independent of summation order.
fn neumaier_sum(xs: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for x in xs {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            comp += (sum - t) + x;
        } else {
            comp += (x - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

fn softmax_line(src: &[f64], out: &mut [f64], _stride: usize) {
    let max = src.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, &x) in out.iter_mut().zip(src) {
        let e = (x - max).exp();
        *o = e;
        sum += e;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

fn transpose_raw(a: &[f64], r: usize, c: usize) -> Vec<f64> {
    let mut out = vec![0.0; r * c];
    for i in 0..r {
        for j in 0..c {
            out[j * r + i] = a[i * c + j];
        }
    }
    out
}

fn acc<'g>(grads: &'g mut [Option<Vec<f64>>], idx: usize, len: usize) -> &'g mut [f64] {
    grads[idx].get_or_insert_with(|| vec![0.0; len])
}

/// Accumulates `src` (times `sign`) into the gradient slot of `idx`; if the
/// target is scalar and `src` is not, the contributions are summed.
fn spread(grads: &mut [Option<Vec<f64>>], idx: usize, target_len: usize, src: &[f64], sign: f64) {
    let d = grads[idx].get_or_insert_with(|| vec![0.0; target_len]);
    if target_len == src.len() {
        for (dv, &sv) in d.iter_mut().zip(src) {
            *dv += sign * sv;
        }
    } else {
        debug_assert_eq!(target_len, 1);
        d[0] += sign * src.iter().sum::<f64>();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    fn t2(rows: &[&[f64]]) -> Tensor {
        Tensor::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn matmul_identity() {
        let mut tape = Tape::new();
        let i2 = tape.leaf(&t2(&[&[1.0, 0.0], &[0.0, 1.0]]), false);
        let a = tape.leaf(&t2(&[&[1.0, 2.0], &[3.0, 4.0]]), false);
        let out = tape.matmul(i2, a).unwrap();
        assert_eq!(tape.values(out), &[1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn matmul_hand_expanded() {
        // [[1,2],[3,4]] x [[5],[6]]: rows dot column -> 1*5+2*6=17, 3*5+4*6=39
        let mut tape = Tape::new();
        let a = tape.leaf(&t2(&[&[1.0, 2.0], &[3.0, 4.0]]), false);
        let b = tape.leaf(&t2(&[&[5.0], &[6.0]]), false);
        let out = tape.matmul(a, b).unwrap();
        assert_eq!(tape.shape(out), (2, 1));
        assert_eq!(tape.values(out), &[17.0, 39.0]);
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let mut tape = Tape::new();
        let a = tape.leaf(&Tensor::zeros(vec![2, 3]), false);
        let b = tape.leaf(&Tensor::zeros(vec![2, 3]), false);
        let err = tape.matmul(a, b).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("2x3") && msg.contains("3"), "{msg}");
    }

    #[test]
    fn activation_fixed_points() {
        let mut tape = Tape::new();
        let z = tape.constant(0.0);
        let s = tape.sigmoid(z);
        let t = tape.tanh(z);
        assert_eq!(tape.scalar_value(s), 0.5);
        assert_eq!(tape.scalar_value(t), 0.0);
    }

    #[test]
    fn sigmoid_saturation_is_finite() {
        let mut tape = Tape::new();
        let big = tape.leaf(&t2(&[&[800.0, -800.0]]), false);
        let s = tape.sigmoid(big);
        let v = tape.values(s);
        assert!(v.iter().all(|x| x.is_finite()));
        assert!(v[0] > 0.999 && v[1] < 0.001);
    }

    #[test]
    fn concat_shape_arithmetic() {
        let mut tape = Tape::new();
        let a = tape.leaf(&Tensor::zeros(vec![1, 2]), false);
        let b = tape.leaf(&Tensor::zeros(vec![1, 3]), false);
        let c = tape.concat(&[a, b], Axis::Cols).unwrap();
        assert_eq!(tape.shape(c), (1, 5));
        let err = tape.concat(&[a, c], Axis::Rows);
        assert!(err.is_err());
    }

    #[test]
    fn softmax_examples() {
        let mut tape = Tape::new();
        let a = tape.leaf(&t2(&[&[0.0, 0.0]]), false);
        let s = tape.softmax(a, Axis::Cols);
        assert_eq!(tape.values(s), &[0.5, 0.5]);

        let big = tape.leaf(&t2(&[&[1000.0, 1000.0]]), false);
        let s2 = tape.softmax(big, Axis::Cols);
        assert_eq!(tape.values(s2), &[0.5, 0.5]);

        // e^0 = 1, e^{ln 3} = 3 -> 1/4, 3/4
        let c = tape.leaf(&t2(&[&[0.0, 3.0_f64.ln()]]), false);
        let s3 = tape.softmax(c, Axis::Cols);
        let v = tape.values(s3);
        assert!((v[0] - 0.25).abs() < 1e-15);
        assert!((v[1] - 0.75).abs() < 1e-15);
    }

    #[test]
    fn softmax_rows_sum_to_one_and_shift_invariant() {
        let mut tape = Tape::new();
        let a = tape.leaf(&t2(&[&[0.3, -1.2, 2.0], &[5.0, 5.0, -3.0]]), false);
        let s = tape.softmax(a, Axis::Cols);
        for i in 0..2 {
            let sum: f64 = tape.values(s)[i * 3..(i + 1) * 3].iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
        }
        let shifted = tape.leaf(&t2(&[&[100.3, 98.8, 102.0], &[105.0, 105.0, 97.0]]), false);
        let s2 = tape.softmax(shifted, Axis::Cols);
        for (x, y) in tape.values(s).iter().zip(tape.values(s2)) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn backward_square() {
        // loss = x^2 at x = 3 -> dloss/dx = 6
        let mut tape = Tape::new();
        let x = tape.leaf(&Tensor::scalar(3.0), true);
        let sq = tape.mul(x, x).unwrap();
        let grads = tape.backward(sq).unwrap();
        assert_eq!(grads.of(x).values(), &[6.0]);
    }

    #[test]
    fn backward_sigmoid_linear() {
        // loss = sigmoid(w*x) at w=0, x=1: sigma'(0) = 0.25
        let mut tape = Tape::new();
        let w = tape.leaf(&Tensor::scalar(0.0), true);
        let x = tape.leaf(&Tensor::scalar(1.0), false);
        let wx = tape.mul(w, x).unwrap();
        let s = tape.sigmoid(wx);
        let grads = tape.backward(s).unwrap();
        assert_eq!(grads.of(w).values(), &[0.25]);
    }

    #[test]
    fn backward_requires_scalar_loss() {
        let mut tape = Tape::new();
        let x = tape.leaf(&Tensor::zeros(vec![2, 2]), true);
        assert!(matches!(tape.backward(x), Err(Error::Contract(_))));
    }

    #[test]
    fn off_path_parameter_gets_zero_gradient() {
        let mut tape = Tape::new();
        let x = tape.leaf(&Tensor::scalar(3.0), true);
        let unused = tape.leaf(&Tensor::zeros(vec![2, 2]), true);
        let sq = tape.mul(x, x).unwrap();
        let grads = tape.backward(sq).unwrap();
        assert_eq!(grads.of(unused).values(), &[0.0; 4]);
    }

    #[test]
    fn bce_from_logit_matches_plain_formula() {
        // p = sigmoid(z); J = -y ln p - (1-y) ln(1-p)
        for &(z, y) in &[(0.0, 1.0), (2.2, 0.0), (-1.7, 1.0), (4.0, 0.0)] {
            let mut tape = Tape::new();
            let zv = tape.leaf(&Tensor::scalar(z), true);
            let loss = tape.bce_from_logit(zv, y).unwrap();
            let p = sigmoid(z);
            let expect = -y * p.ln() - (1.0 - y) * (1.0 - p).ln();
            assert!((tape.scalar_value(loss) - expect).abs() < 1e-12);
            let grads = tape.backward(loss).unwrap();
            assert!((grads.of(zv).values()[0] - (p - y)).abs() < 1e-12);
        }
    }

    #[test]
    fn determinism_bitwise() {
        let run = || {
            let mut tape = Tape::new();
            let a = tape.leaf(&t2(&[&[0.1, -0.7, 0.3], &[2.0, 1.1, -0.2]]), true);
            let b = tape.leaf(&t2(&[&[0.5], &[1.5], &[-0.4]]), true);
            let m = tape.matmul(a, b).unwrap();
            let s = tape.tanh(m);
            let out = tape.sum_all(s);
            let grads = tape.backward(out).unwrap();
            (
                tape.scalar_value(out).to_bits(),
                grads
                    .of(a)
                    .values()
                    .iter()
                    .map(|v| v.to_bits())
                    .collect::<Vec<_>>(),
            )
        };
        assert_eq!(run(), run());
    }
}
