//! Stacked implicit pose features with one temporal convolution.
//!
//! Per-frame pose features of a tube form an `L×D` matrix; a single
//! convolution with kernel length `T` maps every `T`-frame window to class
//! logits. Training uses random windows; inference slides over every valid
//! window and averages the per-window class probabilities.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::init_uniform;
use crate::error::{Error, Result};
use crate::tensor::{self, ModelParams, Tape, Tensor, Var};

/// How per-clip logits become one probability vector.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbAveraging {
    /// Softmax each clip, then take the arithmetic mean.
    #[default]
    SoftmaxThenMean,
    /// Mean of the logits, then one softmax.
    MeanLogitsThenSoftmax,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SipNetHead {
    pub t: usize,
    pub d: usize,
    pub c: usize,
    pub averaging: ProbAveraging,
    pub params: ModelParams,
}

pub const KERNEL: &str = "kernel";
pub const BIAS: &str = "bias";

impl SipNetHead {
    /// Kernel uniform in `±sqrt(1 / (T·D))`, zero bias.
    pub fn new<R: Rng + ?Sized>(t: usize, d: usize, c: usize, rng: &mut R) -> Result<Self> {
        let mut head = SipNetHead::zeros(t, d, c)?;
        let kernel = init_uniform(&[t, d, c], t * d, rng);
        head.params.insert(KERNEL, kernel);
        Ok(head)
    }

    pub fn zeros(t: usize, d: usize, c: usize) -> Result<Self> {
        if t == 0 || d == 0 || c == 0 {
            return Err(Error::Config(format!(
                "SIP-Net dimensions must be positive (T={t}, D={d}, C={c})"
            )));
        }
        let mut params = ModelParams::new();
        params.insert(KERNEL, Tensor::zeros(&[t, d, c]));
        params.insert(BIAS, Tensor::zeros(&[c]));
        Ok(SipNetHead {
            t,
            d,
            c,
            averaging: ProbAveraging::default(),
            params,
        })
    }

    pub fn from_params(t: usize, d: usize, c: usize, params: ModelParams) -> Result<Self> {
        let k = params.require(KERNEL)?;
        let b = params.require(BIAS)?;
        if k.shape() != [t, d, c] || b.shape() != [c] {
            return Err(Error::Config(format!(
                "SIP-Net parameter shapes {:?}/{:?} do not match T={t}, D={d}, C={c}",
                k.shape(),
                b.shape()
            )));
        }
        Ok(SipNetHead {
            t,
            d,
            c,
            averaging: ProbAveraging::default(),
            params,
        })
    }

    pub fn parameter_count(&self) -> usize {
        self.params.count()
    }

    pub fn kernel(&self) -> &Tensor {
        self.params.get(KERNEL).expect("kernel present")
    }

    pub fn bias(&self) -> &Tensor {
        self.params.get(BIAS).expect("bias present")
    }

    /// Logits for every valid window: `[(L−T+1) × C]`.
    pub fn scores(&self, features: &Tensor) -> Result<Tensor> {
        if features.rank() != 2 || features.shape()[1] != self.d {
            return Err(Error::dim(
                "sipnet_scores",
                format!("expected L×{}, got {:?}", self.d, features.shape()),
            ));
        }
        tensor::conv1d_temporal(features, self.kernel(), self.bias())
    }

    /// Mean cross-entropy of a batch of `T×D` clips, recorded on `tape`.
    /// `vars` are this head's parameters registered on the same tape.
    pub fn batch_loss(
        &self,
        tape: &mut Tape,
        vars: &[Var],
        clips: &[Tensor],
        labels: &[usize],
    ) -> Result<Var> {
        let batch = stack(clips)?;
        let b = clips.len();
        let x = tape.constant(batch);
        let out = tape.conv1d_temporal(x, vars[0], vars[1])?;
        let rows = tape.value(out).shape()[1];
        let logits = tape.reshape(out, &[b * rows, self.c])?;
        let labels: Vec<usize> = labels
            .iter()
            .flat_map(|&l| std::iter::repeat_n(l, rows))
            .collect();
        tape.cross_entropy(logits, &labels)
    }
}

/// Stacks equally shaped tensors along a new leading axis.
pub(crate) fn stack(items: &[Tensor]) -> Result<Tensor> {
    let first = items
        .first()
        .ok_or_else(|| Error::dim("stack", "empty batch"))?;
    let mut data = Vec::with_capacity(first.len() * items.len());
    for t in items {
        if t.shape() != first.shape() {
            return Err(Error::dim(
                "stack",
                format!("{:?} vs {:?}", t.shape(), first.shape()),
            ));
        }
        data.extend_from_slice(t.data());
    }
    let mut shape = vec![items.len()];
    shape.extend_from_slice(first.shape());
    Tensor::new(shape, data)
}

/// One probability vector from per-clip logits `[N × C]`.
pub fn sipnet_video_probs(clip_logits: &Tensor, mode: ProbAveraging) -> Result<Vec<f64>> {
    let [n, c] = *clip_logits.shape() else {
        return Err(Error::dim(
            "sipnet_video_probs",
            format!("expected N×C, got {:?}", clip_logits.shape()),
        ));
    };
    if n == 0 {
        return Err(Error::SequenceTooShort { len: 0, required: 1 });
    }
    match mode {
        ProbAveraging::SoftmaxThenMean => {
            let probs = tensor::softmax(clip_logits);
            let mut mean = vec![0.0; c];
            for row in probs.data().chunks(c) {
                for (m, &p) in mean.iter_mut().zip(row) {
                    *m += p;
                }
            }
            mean.iter_mut().for_each(|m| *m /= n as f64);
            Ok(mean)
        }
        ProbAveraging::MeanLogitsThenSoftmax => {
            let mut mean = vec![0.0; c];
            for row in clip_logits.data().chunks(c) {
                for (m, &z) in mean.iter_mut().zip(row) {
                    *m += z;
                }
            }
            mean.iter_mut().for_each(|m| *m /= n as f64);
            Ok(tensor::softmax(&Tensor::vector(mean)?).into_data())
        }
    }
}
