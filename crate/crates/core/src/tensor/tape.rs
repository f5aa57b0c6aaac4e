use std::sync::Arc;

use super::kernels::{self, ConvDims};
use super::Tensor;
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Conv1d {
        input: Var,
        kernel: Var,
        bias: Var,
        dims: ConvDims,
    },
    Add(Var, Var),
    AddBias(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    Softmax(Var),
    CrossEntropy {
        logits: Var,
        labels: Vec<usize>,
    },
    Mean(Var),
    MeanMiddle(Var),
    Reshape(Var),
    Transpose12(Var),
    GraphMix {
        adjacency: Arc<Tensor>,
        input: Var,
    },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Records operations in execution order; `backward` walks them in reverse.
///
/// A tape belongs to one training step: call [`Tape::clear`] (or build a new
/// one) before the next step.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<Vec<f64>>>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn clear(&mut self) {
        self.nodes.clear();
        self.grads.clear();
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        self.grads.push(None);
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// A trainable leaf: gradients are accumulated for it.
    pub fn param(&mut self, value: Tensor) -> Var {
        let mut value = value;
        value.clear_grad();
        self.push(value, Op::Leaf, true)
    }

    /// A constant input: no gradient is accumulated for it.
    pub fn constant(&mut self, value: Tensor) -> Var {
        let mut value = value;
        value.clear_grad();
        self.push(value, Op::Leaf, false)
    }

    /// Same as [`Tape::param`] but for inputs whose gradient is wanted
    /// without being a model parameter (gradient checks).
    pub fn input(&mut self, value: Tensor) -> Var {
        self.param(value)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.grads[v.0].as_deref()
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = kernels::matmul(self.value(a), self.value(b))?;
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(out, Op::MatMul(a, b), ng))
    }

    pub fn conv1d_temporal(&mut self, input: Var, kernel: Var, bias: Var) -> Result<Var> {
        let (x, k, b) = (self.value(input), self.value(kernel), self.value(bias));
        let dims = ConvDims::check(x, k, b)?;
        let data = kernels::conv_forward(x.data(), k.data(), b.data(), dims);
        let out = Tensor::from_parts_unchecked(dims.out_shape(x.rank() == 3), data);
        let ng = self.needs(input) || self.needs(kernel) || self.needs(bias);
        Ok(self.push(
            out,
            Op::Conv1d {
                input,
                kernel,
                bias,
                dims,
            },
            ng,
        ))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        if x.shape() != y.shape() {
            return Err(Error::dim(
                "add",
                format!("{:?} vs {:?}", x.shape(), y.shape()),
            ));
        }
        let data = x.data().iter().zip(y.data()).map(|(p, q)| p + q).collect();
        let out = Tensor::from_parts_unchecked(x.shape().to_vec(), data);
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(out, Op::Add(a, b), ng))
    }

    /// Adds a vector along the last axis of `x`.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (xv, bv) = (self.value(x), self.value(bias));
        let c = *xv.shape().last().unwrap_or(&1);
        if bv.shape() != [c] {
            return Err(Error::dim(
                "add_bias",
                format!("bias {:?} vs last axis {c}", bv.shape()),
            ));
        }
        let data = xv
            .data()
            .chunks(c)
            .flat_map(|row| row.iter().zip(bv.data()).map(|(p, q)| p + q))
            .collect();
        let out = Tensor::from_parts_unchecked(xv.shape().to_vec(), data);
        let ng = self.needs(x) || self.needs(bias);
        Ok(self.push(out, Op::AddBias(x, bias), ng))
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Var {
        let xv = self.value(x);
        let out = Tensor::from_parts_unchecked(
            xv.shape().to_vec(),
            xv.data().iter().map(|v| v * s).collect(),
        );
        let ng = self.needs(x);
        self.push(out, Op::Scale(x, s), ng)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let out = Tensor::from_parts_unchecked(
            xv.shape().to_vec(),
            xv.data().iter().map(|&v| v.max(0.0)).collect(),
        );
        let ng = self.needs(x);
        self.push(out, Op::Relu(x), ng)
    }

    /// Softmax along the last axis.
    pub fn softmax(&mut self, x: Var) -> Var {
        let out = kernels::softmax(self.value(x));
        let ng = self.needs(x);
        self.push(out, Op::Softmax(x), ng)
    }

    /// Mean cross-entropy over the rows of `logits` (`C` or `N×C`).
    pub fn cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let lv = self.value(logits);
        let (rows, c) = match lv.shape() {
            [c] => (1, *c),
            [n, c] => (*n, *c),
            s => return Err(Error::dim("cross_entropy", format!("shape {s:?}"))),
        };
        if labels.len() != rows {
            return Err(Error::dim(
                "cross_entropy",
                format!("{} labels for {rows} rows", labels.len()),
            ));
        }
        let mut total = 0.0;
        for (row, &label) in lv.data().chunks(c).zip(labels) {
            if label >= c {
                return Err(Error::Index { index: label, len: c });
            }
            total += kernels::log_sum_exp(row) - row[label];
        }
        let out = Tensor::scalar(total / rows as f64);
        let ng = self.needs(logits);
        Ok(self.push(
            out,
            Op::CrossEntropy {
                logits,
                labels: labels.to_vec(),
            },
            ng,
        ))
    }

    /// Mean of every element, as a scalar.
    pub fn mean(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let n = xv.len().max(1);
        let out = Tensor::scalar(xv.data().iter().sum::<f64>() / n as f64);
        let ng = self.needs(x);
        self.push(out, Op::Mean(x), ng)
    }

    /// `[A, B, C] -> [A, C]`, averaging over the middle axis.
    pub fn mean_middle(&mut self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        let [a, b, c] = *xv.shape() else {
            return Err(Error::dim("mean_middle", format!("shape {:?}", xv.shape())));
        };
        let mut out = vec![0.0; a * c];
        for i in 0..a {
            let dst = &mut out[i * c..(i + 1) * c];
            for j in 0..b {
                let src = &xv.data()[(i * b + j) * c..(i * b + j + 1) * c];
                for (o, &v) in dst.iter_mut().zip(src) {
                    *o += v;
                }
            }
            for o in dst.iter_mut() {
                *o /= b as f64;
            }
        }
        let ng = self.needs(x);
        Ok(self.push(
            Tensor::from_parts_unchecked(vec![a, c], out),
            Op::MeanMiddle(x),
            ng,
        ))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let out = self.value(x).clone().reshape(shape.to_vec())?;
        let ng = self.needs(x);
        Ok(self.push(out, Op::Reshape(x), ng))
    }

    /// Swaps axes 1 and 2 of a rank-4 tensor: `[A, B, C, D] -> [A, C, B, D]`.
    pub fn transpose12(&mut self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        let [a, b, c, d] = *xv.shape() else {
            return Err(Error::dim("transpose12", format!("shape {:?}", xv.shape())));
        };
        let out = transpose12_data(xv.data(), [a, b, c, d]);
        let ng = self.needs(x);
        Ok(self.push(
            Tensor::from_parts_unchecked(vec![a, c, b, d], out),
            Op::Transpose12(x),
            ng,
        ))
    }

    /// Mixes the second-to-last axis with a constant `J×J` matrix:
    /// `out[.., j, c] = Σ_k adj[j,k] · x[.., k, c]`.
    pub fn graph_mix(&mut self, adjacency: Arc<Tensor>, x: Var) -> Result<Var> {
        let xv = self.value(x);
        let r = xv.rank();
        let [j1, j2] = *adjacency.shape() else {
            return Err(Error::dim("graph_mix", "adjacency must be square"));
        };
        if r < 2 || j1 != j2 || xv.shape()[r - 2] != j1 {
            return Err(Error::dim(
                "graph_mix",
                format!("adjacency {j1}×{j2} vs input {:?}", xv.shape()),
            ));
        }
        let c = xv.shape()[r - 1];
        let j = j1;
        let mut out = vec![0.0; xv.len()];
        let adj = adjacency.data();
        for (src, dst) in xv.data().chunks(j * c).zip(out.chunks_mut(j * c)) {
            for a in 0..j {
                let drow = &mut dst[a * c..(a + 1) * c];
                for b in 0..j {
                    let w = adj[a * j + b];
                    for (o, &v) in drow.iter_mut().zip(&src[b * c..(b + 1) * c]) {
                        *o += w * v;
                    }
                }
            }
        }
        let shape = xv.shape().to_vec();
        let ng = self.needs(x);
        Ok(self.push(
            Tensor::from_parts_unchecked(shape, out),
            Op::GraphMix { adjacency, input: x },
            ng,
        ))
    }

    fn acc(&mut self, v: Var) -> &mut [f64] {
        let n = self.nodes[v.0].value.len();
        self.grads[v.0].get_or_insert_with(|| vec![0.0; n])
    }

    /// Back-propagates from a scalar `loss` through every recorded operation.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.value(loss).len() != 1 {
            return Err(Error::dim(
                "backward",
                format!("loss must be scalar, got {:?}", self.value(loss).shape()),
            ));
        }
        for g in self.grads.iter_mut() {
            *g = None;
        }
        self.grads[loss.0] = Some(vec![1.0]);
        for idx in (0..=loss.0).rev() {
            if !self.nodes[idx].needs_grad {
                continue;
            }
            let Some(g) = self.grads[idx].take() else {
                continue;
            };
            self.propagate(idx, &g);
            self.grads[idx] = Some(g);
        }
        Ok(())
    }

    fn propagate(&mut self, idx: usize, g: &[f64]) {
        // Temporarily move the op out so parent buffers can be borrowed mutably.
        let op = std::mem::replace(&mut self.nodes[idx].op, Op::Leaf);
        match &op {
            Op::Leaf => {}
            &Op::MatMul(a, b) => {
                let (av, bv) = (self.value(a).clone(), self.value(b).clone());
                if self.needs(a) {
                    kernels::matmul_backward(&av, &bv, g, Some(self.acc(a)), None);
                }
                if self.needs(b) {
                    kernels::matmul_backward(&av, &bv, g, None, Some(self.acc(b)));
                }
            }
            &Op::Conv1d {
                input,
                kernel,
                bias,
                dims,
            } => {
                let xv = self.value(input).data().to_vec();
                let kv = self.value(kernel).data().to_vec();
                if self.needs(input) {
                    kernels::conv_backward(&xv, &kv, g, dims, Some(self.acc(input)), None, None);
                }
                if self.needs(kernel) {
                    kernels::conv_backward(&xv, &kv, g, dims, None, Some(self.acc(kernel)), None);
                }
                if self.needs(bias) {
                    kernels::conv_backward(&xv, &kv, g, dims, None, None, Some(self.acc(bias)));
                }
            }
            &Op::Add(a, b) => {
                for v in [a, b] {
                    if self.needs(v) {
                        self.acc(v).iter_mut().zip(g).for_each(|(d, &s)| *d += s);
                    }
                }
            }
            &Op::AddBias(x, bias) => {
                if self.needs(x) {
                    self.acc(x).iter_mut().zip(g).for_each(|(d, &s)| *d += s);
                }
                if self.needs(bias) {
                    let c = self.value(bias).len();
                    let db = self.acc(bias);
                    for row in g.chunks(c) {
                        db.iter_mut().zip(row).for_each(|(d, &s)| *d += s);
                    }
                }
            }
            &Op::Scale(x, s) => {
                self.acc(x).iter_mut().zip(g).for_each(|(d, &gv)| *d += s * gv);
            }
            &Op::Relu(x) => {
                let xv = self.value(x).data().to_vec();
                self.acc(x)
                    .iter_mut()
                    .zip(g)
                    .zip(&xv)
                    .for_each(|((d, &gv), &v)| {
                        if v > 0.0 {
                            *d += gv
                        }
                    });
            }
            &Op::Softmax(x) => {
                let y = self.nodes[idx].value.data().to_vec();
                let c = *self.value(x).shape().last().unwrap_or(&1);
                let dx = self.acc(x);
                for ((yr, gr), dr) in y.chunks(c).zip(g.chunks(c)).zip(dx.chunks_mut(c)) {
                    let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                    for ((d, &yv), &gv) in dr.iter_mut().zip(yr).zip(gr) {
                        *d += yv * (gv - dot);
                    }
                }
            }
            Op::CrossEntropy { logits, labels } => {
                let logits = *logits;
                let lv = self.value(logits).clone();
                let c = *lv.shape().last().unwrap_or(&1);
                let rows = labels.len() as f64;
                let dl = self.acc(logits);
                let mut p = vec![0.0; c];
                for ((row, dr), &label) in lv.data().chunks(c).zip(dl.chunks_mut(c)).zip(labels) {
                    kernels::softmax_row(row, &mut p);
                    p[label] -= 1.0;
                    for (d, &pv) in dr.iter_mut().zip(&p) {
                        *d += g[0] * pv / rows;
                    }
                }
            }
            &Op::Mean(x) => {
                let n = self.value(x).len().max(1) as f64;
                self.acc(x).iter_mut().for_each(|d| *d += g[0] / n);
            }
            &Op::MeanMiddle(x) => {
                let [a, b, c] = *self.value(x).shape() else {
                    unreachable!()
                };
                let dx = self.acc(x);
                for i in 0..a {
                    for j in 0..b {
                        for k in 0..c {
                            dx[(i * b + j) * c + k] += g[i * c + k] / b as f64;
                        }
                    }
                }
            }
            &Op::Reshape(x) => {
                self.acc(x).iter_mut().zip(g).for_each(|(d, &s)| *d += s);
            }
            &Op::Transpose12(x) => {
                let [a, b, c, d] = *self.value(x).shape() else {
                    unreachable!()
                };
                // g has shape [a, c, b, d]; transposing it back restores x's layout.
                let back = transpose12_data(g, [a, c, b, d]);
                self.acc(x).iter_mut().zip(&back).for_each(|(o, &s)| *o += s);
            }
            Op::GraphMix { adjacency, input } => {
                let input = *input;
                let shape = self.value(input).shape().to_vec();
                let r = shape.len();
                let (j, c) = (shape[r - 2], shape[r - 1]);
                let adj = adjacency.data();
                let dx = self.acc(input);
                for (gs, ds) in g.chunks(j * c).zip(dx.chunks_mut(j * c)) {
                    for a in 0..j {
                        for b in 0..j {
                            let w = adj[a * j + b];
                            for k in 0..c {
                                ds[b * c + k] += w * gs[a * c + k];
                            }
                        }
                    }
                }
            }
        }
        self.nodes[idx].op = op;
    }
}

fn transpose12_data(src: &[f64], [a, b, c, d]: [usize; 4]) -> Vec<f64> {
    let mut out = vec![0.0; src.len()];
    for i in 0..a {
        for j in 0..b {
            for k in 0..c {
                let s = ((i * b + j) * c + k) * d;
                let t = ((i * c + k) * b + j) * d;
                out[t..t + d].copy_from_slice(&src[s..s + d]);
            }
        }
    }
    out
}
