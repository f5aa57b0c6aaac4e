//! Forward kernels and their backward rules.
//!
//! All reductions run left to right in a fixed order so results are
//! reproducible bit-for-bit.

use super::Tensor;
use crate::error::{Error, Result};

fn matrix_dims(t: &Tensor, op: &'static str) -> Result<(usize, usize)> {
    match t.shape() {
        [m, n] => Ok((*m, *n)),
        s => Err(Error::dim(op, format!("expected a matrix, got shape {s:?}"))),
    }
}

/// `a[m×k] · b[k×n]`.
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (m, k) = matrix_dims(a, "matmul")?;
    let (k2, n) = matrix_dims(b, "matmul")?;
    if k != k2 {
        return Err(Error::dim(
            "matmul",
            format!("inner dimensions {k} and {k2} differ"),
        ));
    }
    let (ad, bd) = (a.data(), b.data());
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let x = ad[i * k + p];
            let brow = &bd[p * n..(p + 1) * n];
            for (o, &y) in row.iter_mut().zip(brow) {
                *o += x * y;
            }
        }
    }
    Ok(Tensor::from_parts_unchecked(vec![m, n], out))
}

/// Accumulates `dA += dC·Bᵀ` and `dB += Aᵀ·dC`.
pub(crate) fn matmul_backward(
    a: &Tensor,
    b: &Tensor,
    d_out: &[f64],
    d_a: Option<&mut [f64]>,
    d_b: Option<&mut [f64]>,
) {
    let (m, k) = (a.shape()[0], a.shape()[1]);
    let n = b.shape()[1];
    if let Some(da) = d_a {
        for i in 0..m {
            for p in 0..k {
                let mut acc = 0.0;
                for j in 0..n {
                    acc += d_out[i * n + j] * b.data()[p * n + j];
                }
                da[i * k + p] += acc;
            }
        }
    }
    if let Some(db) = d_b {
        for p in 0..k {
            for i in 0..m {
                let x = a.data()[i * k + p];
                for j in 0..n {
                    db[p * n + j] += x * d_out[i * n + j];
                }
            }
        }
    }
}

/// Geometry of a (possibly batched) temporal convolution.
#[derive(Clone, Copy, Debug)]
pub(crate) struct ConvDims {
    pub batch: usize,
    pub t_in: usize,
    pub depth: usize,
    pub k: usize,
    pub channels: usize,
}

impl ConvDims {
    pub fn t_out(&self) -> usize {
        self.t_in - self.k + 1
    }

    pub fn check(input: &Tensor, kernel: &Tensor, bias: &Tensor) -> Result<Self> {
        let (batch, t_in, depth) = match input.shape() {
            [t, d] => (1, *t, *d),
            [n, t, d] => (*n, *t, *d),
            s => {
                return Err(Error::dim(
                    "conv1d_temporal",
                    format!("input must be T×D or N×T×D, got {s:?}"),
                ))
            }
        };
        let [k, kd, channels] = kernel.shape() else {
            return Err(Error::dim(
                "conv1d_temporal",
                format!("kernel must be K×D×C, got {:?}", kernel.shape()),
            ));
        };
        if *kd != depth {
            return Err(Error::dim(
                "conv1d_temporal",
                format!("kernel depth {kd} != input depth {depth}"),
            ));
        }
        if bias.shape() != [*channels] {
            return Err(Error::dim(
                "conv1d_temporal",
                format!("bias shape {:?} != [{channels}]", bias.shape()),
            ));
        }
        if *k == 0 {
            return Err(Error::dim("conv1d_temporal", "kernel length is zero"));
        }
        if t_in < *k {
            return Err(Error::SequenceTooShort {
                len: t_in,
                required: *k,
            });
        }
        Ok(ConvDims {
            batch,
            t_in,
            depth,
            k: *k,
            channels: *channels,
        })
    }

    pub fn out_shape(&self, batched: bool) -> Vec<usize> {
        if batched {
            vec![self.batch, self.t_out(), self.channels]
        } else {
            vec![self.t_out(), self.channels]
        }
    }
}

/// Valid, stride-1 temporal convolution:
/// `out[t,c] = bias[c] + Σ_{k,d} input[t+k,d]·kernel[k,d,c]`.
///
/// A leading batch axis on `input` is carried through with a shared kernel.
pub fn conv1d_temporal(input: &Tensor, kernel: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let dims = ConvDims::check(input, kernel, bias)?;
    let out = conv_forward(input.data(), kernel.data(), bias.data(), dims);
    Ok(Tensor::from_parts_unchecked(
        dims.out_shape(input.rank() == 3),
        out,
    ))
}

pub(crate) fn conv_forward(input: &[f64], kernel: &[f64], bias: &[f64], dims: ConvDims) -> Vec<f64> {
    let ConvDims {
        batch,
        t_in,
        depth,
        k,
        channels,
    } = dims;
    let t_out = dims.t_out();
    let mut out = vec![0.0; batch * t_out * channels];
    for n in 0..batch {
        for t in 0..t_out {
            let acc = &mut out[(n * t_out + t) * channels..(n * t_out + t + 1) * channels];
            acc.copy_from_slice(bias);
            for kk in 0..k {
                let row = &input[(n * t_in + t + kk) * depth..(n * t_in + t + kk + 1) * depth];
                for (d, &x) in row.iter().enumerate() {
                    let w = &kernel[(kk * depth + d) * channels..(kk * depth + d + 1) * channels];
                    for (a, &wv) in acc.iter_mut().zip(w) {
                        *a += x * wv;
                    }
                }
            }
        }
    }
    out
}

pub(crate) fn conv_backward(
    input: &[f64],
    kernel: &[f64],
    d_out: &[f64],
    dims: ConvDims,
    d_input: Option<&mut [f64]>,
    d_kernel: Option<&mut [f64]>,
    d_bias: Option<&mut [f64]>,
) {
    let ConvDims {
        batch,
        t_in,
        depth,
        k,
        channels,
    } = dims;
    let t_out = dims.t_out();
    let g = |n: usize, t: usize| &d_out[(n * t_out + t) * channels..(n * t_out + t + 1) * channels];
    if let Some(db) = d_bias {
        for n in 0..batch {
            for t in 0..t_out {
                for (b, &gv) in db.iter_mut().zip(g(n, t)) {
                    *b += gv;
                }
            }
        }
    }
    if let Some(dk) = d_kernel {
        for n in 0..batch {
            for t in 0..t_out {
                let gt = g(n, t);
                for kk in 0..k {
                    let row = &input[(n * t_in + t + kk) * depth..(n * t_in + t + kk + 1) * depth];
                    for (d, &x) in row.iter().enumerate() {
                        let w = &mut dk[(kk * depth + d) * channels..(kk * depth + d + 1) * channels];
                        for (wv, &gv) in w.iter_mut().zip(gt) {
                            *wv += x * gv;
                        }
                    }
                }
            }
        }
    }
    if let Some(di) = d_input {
        for n in 0..batch {
            for t in 0..t_out {
                let gt = g(n, t);
                for kk in 0..k {
                    for d in 0..depth {
                        let w = &kernel[(kk * depth + d) * channels..(kk * depth + d + 1) * channels];
                        let mut acc = 0.0;
                        for (wv, &gv) in w.iter().zip(gt) {
                            acc += wv * gv;
                        }
                        di[(n * t_in + t + kk) * depth + d] += acc;
                    }
                }
            }
        }
    }
}

/// Stable softmax of one row, written into `out`.
pub(crate) fn softmax_row(logits: &[f64], out: &mut [f64]) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, &z) in out.iter_mut().zip(logits) {
        *o = (z - max).exp();
        sum += *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

/// Softmax along the last axis (each row of a matrix, or a single vector).
pub fn softmax(logits: &Tensor) -> Tensor {
    let c = *logits.shape().last().unwrap_or(&1);
    let mut out = vec![0.0; logits.len()];
    if c > 0 {
        for (src, dst) in logits.data().chunks(c).zip(out.chunks_mut(c)) {
            softmax_row(src, dst);
        }
    }
    Tensor::from_parts_unchecked(logits.shape().to_vec(), out)
}

pub(crate) fn log_sum_exp(logits: &[f64]) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln()
}

/// `−log softmax(logits)[label]` for a single logit vector.
pub fn cross_entropy(logits: &Tensor, label: usize) -> Result<f64> {
    let c = logits.len();
    if logits.rank() > 1 {
        return Err(Error::dim(
            "cross_entropy",
            format!("expected a vector, got {:?}", logits.shape()),
        ));
    }
    if label >= c {
        return Err(Error::Index { index: label, len: c });
    }
    Ok(log_sum_exp(logits.data()) - logits.data()[label])
}
