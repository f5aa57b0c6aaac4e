use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{pad_or_reject, predict_videos, window, Classifier, LabeledVideo, LengthDecision, Phase};
use super::{ClipSampler, SamplingPolicy};
use crate::error::{Error, Result};
use crate::eval::mean_class_accuracy;
use crate::tensor::{ModelParams, Sgd, SgdConfig, Tape, Tensor};

/// A training tube; it carries the label of its video.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingTube {
    pub sequence: Tensor,
    pub label: usize,
}

impl TrainingTube {
    /// Every tube of every video, labeled with the video class.
    pub fn from_videos(videos: &[LabeledVideo]) -> Vec<TrainingTube> {
        videos
            .iter()
            .flat_map(|v| {
                v.tubes.iter().map(|t| TrainingTube {
                    sequence: t.clone(),
                    label: v.label,
                })
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub sgd: SgdConfig,
    /// Stop after this many epochs without a validation improvement.
    pub patience: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 50,
            batch_size: 16,
            sgd: SgdConfig::default(),
            patience: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        self.sgd.validate()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean clip loss of each epoch.
    pub epoch_losses: Vec<f64>,
    /// Held-out mean class accuracy after each epoch, when validating.
    pub validation_accuracy: Vec<f64>,
    /// Epoch (1-based) whose parameters were kept; 0 means the initial ones.
    pub best_epoch: usize,
    /// Tubes shorter than the clip length, never sampled.
    pub skipped_tubes: usize,
}

/// Trains with one random clip per eligible tube per epoch and SGD on
/// mini-batches of clips.
///
/// With `validation`, the parameters with the best held-out mean class
/// accuracy are kept, and training stops early once `patience` epochs pass
/// without improvement.
pub fn train<M: Classifier + Sync>(
    model: &mut M,
    tubes: &[TrainingTube],
    validation: Option<&[LabeledVideo]>,
    config: &TrainConfig,
) -> Result<TrainReport> {
    config.validate()?;
    let t = model.clip_len();
    let classes = model.classes();
    if let Some(bad) = tubes.iter().find(|tube| tube.label >= classes) {
        return Err(Error::Config(format!(
            "training label {} outside {classes} classes",
            bad.label
        )));
    }
    let eligible: Vec<&TrainingTube> = tubes
        .iter()
        .filter(|tube| {
            let len = tube.sequence.shape().first().copied().unwrap_or(0);
            pad_or_reject(len, t, Phase::Train) != LengthDecision::Reject
        })
        .collect();
    let mut report = TrainReport {
        skipped_tubes: tubes.len() - eligible.len(),
        ..TrainReport::default()
    };
    if eligible.is_empty() {
        return Err(Error::Config(format!(
            "no training tube has at least {t} frames ({} given)",
            tubes.len()
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.sgd.seed);
    let sampler = ClipSampler::new(t, SamplingPolicy::RandomTrain)?;
    let mut sgd = Sgd::new(config.sgd.clone())?;
    let mut order: Vec<usize> = (0..eligible.len()).collect();
    let mut best: Option<(f64, ModelParams)> = None;
    let mut since_best = 0;

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let mut clips = Vec::with_capacity(chunk.len());
            let mut labels = Vec::with_capacity(chunk.len());
            for &i in chunk {
                let tube = eligible[i];
                let start = sampler.starts(tube.sequence.shape()[0], &mut rng)[0];
                clips.push(window(&tube.sequence, start, t)?);
                labels.push(tube.label);
            }
            let mut tape = Tape::new();
            let vars = model.params().register(&mut tape);
            let loss = model.batch_loss(&mut tape, &vars, &clips, &labels)?;
            let value = tape.value(loss).data()[0];
            if !value.is_finite() {
                return Err(Error::TrainingDiverged(format!(
                    "loss {value} at epoch {epoch}"
                )));
            }
            tape.backward(loss)?;
            model.params_mut().accumulate_grads(&tape, &vars);
            sgd.step(model.params_mut())?;
            loss_sum += value * chunk.len() as f64;
        }
        report.epoch_losses.push(loss_sum / eligible.len() as f64);

        let Some(videos) = validation else {
            report.best_epoch = epoch;
            continue;
        };
        let preds = predict_videos(&*model, videos)?;
        let labels: Vec<usize> = videos.iter().map(|v| v.label).collect();
        let acc = mean_class_accuracy(&preds, &labels, classes)?
            .mean
            .unwrap_or(0.0);
        report.validation_accuracy.push(acc);
        if best.as_ref().is_none_or(|(b, _)| acc > *b) {
            best = Some((acc, model.params().clone()));
            report.best_epoch = epoch;
            since_best = 0;
        } else {
            since_best += 1;
            if config.patience.is_some_and(|p| since_best >= p) {
                break;
            }
        }
    }
    if let Some((_, params)) = best {
        *model.params_mut() = params;
    }
    Ok(report)
}
