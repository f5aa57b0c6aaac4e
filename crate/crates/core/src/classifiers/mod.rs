//! Trainable action heads, clip sampling, training and inference.

mod distance;
mod model;
mod sampler;
mod sipnet;
mod stgcn;
mod sweep;
mod train;

use rand::Rng;
use rayon::prelude::*;

use crate::error::Result;
use crate::linker::{max_over_tubes, VideoScores};
use crate::tensor::{ModelParams, Tape, Tensor, Var};

pub use distance::{distance_matrix_csv, feature_distance_matrix};
pub use model::{load_model, save_model, sidecar_path_for, HeadKind, Model, ModelSidecar};
pub use sampler::{
    pad_or_reject, replicate_pad, window, ClipSampler, LengthDecision, Phase, SamplingPolicy,
};
pub use sipnet::{sipnet_video_probs, ProbAveraging, SipNetHead};
pub use stgcn::{
    joint_sequence, normalized_adjacency, stgcn_block, stgcn_probs, JointInput, MiniStgcn,
};
pub use sweep::{sweep_csv, t_sweep, SweepPoint};
pub use train::{train, TrainConfig, TrainReport, TrainingTube};

/// Uniform in `±sqrt(1 / fan_in)`.
pub(crate) fn init_uniform<R: Rng + ?Sized>(shape: &[usize], fan_in: usize, rng: &mut R) -> Tensor {
    let bound = (1.0 / fan_in.max(1) as f64).sqrt();
    Tensor::from_fn(shape, |_| rng.random_range(-bound..=bound))
}

/// What training and inference need from a head.
pub trait Classifier {
    fn params(&self) -> &ModelParams;
    fn params_mut(&mut self) -> &mut ModelParams;
    fn classes(&self) -> usize;
    /// Frames per training clip; also the minimum length at test time.
    fn clip_len(&self) -> usize;
    fn batch_loss(
        &self,
        tape: &mut Tape,
        vars: &[Var],
        clips: &[Tensor],
        labels: &[usize],
    ) -> Result<Var>;
    /// Class probabilities of a sequence at least `clip_len` frames long.
    fn sequence_probs(&self, seq: &Tensor) -> Result<Vec<f64>>;
}

impl Classifier for SipNetHead {
    fn params(&self) -> &ModelParams {
        &self.params
    }
    fn params_mut(&mut self) -> &mut ModelParams {
        &mut self.params
    }
    fn classes(&self) -> usize {
        self.c
    }
    fn clip_len(&self) -> usize {
        self.t
    }
    fn batch_loss(
        &self,
        tape: &mut Tape,
        vars: &[Var],
        clips: &[Tensor],
        labels: &[usize],
    ) -> Result<Var> {
        SipNetHead::batch_loss(self, tape, vars, clips, labels)
    }
    fn sequence_probs(&self, seq: &Tensor) -> Result<Vec<f64>> {
        sipnet_video_probs(&self.scores(seq)?, self.averaging)
    }
}

impl Classifier for MiniStgcn {
    fn params(&self) -> &ModelParams {
        &self.params
    }
    fn params_mut(&mut self) -> &mut ModelParams {
        &mut self.params
    }
    fn classes(&self) -> usize {
        self.classes
    }
    fn clip_len(&self) -> usize {
        self.clip_len
    }
    fn batch_loss(
        &self,
        tape: &mut Tape,
        vars: &[Var],
        clips: &[Tensor],
        labels: &[usize],
    ) -> Result<Var> {
        MiniStgcn::batch_loss(self, tape, vars, clips, labels)
    }
    fn sequence_probs(&self, seq: &Tensor) -> Result<Vec<f64>> {
        stgcn_probs(self, seq)
    }
}

/// Test-time probabilities of one tube, replicate-padding short tubes.
pub fn tube_probs<M: Classifier + ?Sized>(model: &M, seq: &Tensor) -> Result<Vec<f64>> {
    let len = seq.shape().first().copied().unwrap_or(0);
    match pad_or_reject(len, model.clip_len(), Phase::Test) {
        LengthDecision::Pad(_) => model.sequence_probs(&replicate_pad(seq, model.clip_len())?),
        _ => model.sequence_probs(seq),
    }
}

/// Video prediction: per-class maximum over tube probabilities, rescaled to
/// sum to one. A video without tubes yields [`VideoScores::NoTube`].
pub fn predict_video<M: Classifier + ?Sized>(model: &M, tubes: &[Tensor]) -> Result<VideoScores> {
    let per_tube = tubes
        .iter()
        .map(|t| tube_probs(model, t))
        .collect::<Result<Vec<_>>>()?;
    Ok(match max_over_tubes(&per_tube)? {
        VideoScores::Scores(s) => {
            let total: f64 = s.iter().sum();
            VideoScores::Scores(s.into_iter().map(|v| v / total).collect())
        }
        VideoScores::NoTube => VideoScores::NoTube,
    })
}

/// A video's tube sequences and its label.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledVideo {
    pub video_id: String,
    pub label: usize,
    pub tubes: Vec<Tensor>,
}

/// Predictions for many videos, in input order. Runs in parallel across
/// videos; the result does not depend on the thread count.
pub fn predict_videos<M: Classifier + Sync + ?Sized>(
    model: &M,
    videos: &[LabeledVideo],
) -> Result<Vec<VideoScores>> {
    videos
        .par_iter()
        .map(|v| predict_video(model, &v.tubes))
        .collect()
}
