use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingPolicy {
    /// One uniformly drawn window per tube.
    RandomTrain,
    /// Every valid window, in temporal order.
    AllValidTest,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Train,
    Test,
}

/// What to do with a tube of a given length.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LengthDecision {
    PassThrough,
    /// Replicate the last frame this many times.
    Pad(usize),
    Reject,
}

/// Short tubes are skipped at training time and replicate-padded at test time.
pub fn pad_or_reject(len: usize, t: usize, phase: Phase) -> LengthDecision {
    if len >= t {
        LengthDecision::PassThrough
    } else {
        match phase {
            Phase::Train => LengthDecision::Reject,
            Phase::Test => LengthDecision::Pad(t - len),
        }
    }
}

/// Appends copies of the last row (axis 0) until the sequence has `t` rows.
pub fn replicate_pad(seq: &Tensor, t: usize) -> Result<Tensor> {
    let len = *seq
        .shape()
        .first()
        .ok_or_else(|| Error::dim("replicate_pad", "scalar sequence"))?;
    if len == 0 {
        return Err(Error::SequenceTooShort { len, required: 1 });
    }
    if len >= t {
        return Ok(seq.clone());
    }
    let row = seq.len() / len;
    let mut data = seq.data().to_vec();
    let last = seq.data()[(len - 1) * row..].to_vec();
    for _ in len..t {
        data.extend_from_slice(&last);
    }
    let mut shape = seq.shape().to_vec();
    shape[0] = t;
    Tensor::new(shape, data)
}

/// Rows `start..start+t` of a sequence (axis 0).
pub fn window(seq: &Tensor, start: usize, t: usize) -> Result<Tensor> {
    let len = seq.shape()[0];
    if start + t > len {
        return Err(Error::SequenceTooShort {
            len: len - start.min(len),
            required: t,
        });
    }
    let row = seq.len() / len.max(1);
    let mut shape = seq.shape().to_vec();
    shape[0] = t;
    Ok(Tensor::from_parts_unchecked(
        shape,
        seq.data()[start * row..(start + t) * row].to_vec(),
    ))
}

/// Emits contiguous windows of exactly `t` frames.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClipSampler {
    pub t: usize,
    pub policy: SamplingPolicy,
}

impl ClipSampler {
    pub fn new(t: usize, policy: SamplingPolicy) -> Result<Self> {
        if t == 0 {
            return Err(Error::Config("clip length must be at least 1".into()));
        }
        Ok(ClipSampler { t, policy })
    }

    /// Window start positions for a tube of length `len`.
    pub fn starts<R: Rng + ?Sized>(&self, len: usize, rng: &mut R) -> Vec<usize> {
        if len < self.t {
            return Vec::new();
        }
        let last = len - self.t;
        match self.policy {
            SamplingPolicy::RandomTrain => vec![rng.random_range(0..=last)],
            SamplingPolicy::AllValidTest => (0..=last).collect(),
        }
    }
}
