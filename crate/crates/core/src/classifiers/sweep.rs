use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{predict_videos, train, LabeledVideo, SipNetHead, TrainConfig, TrainingTube};
use crate::error::{Error, Result};
use crate::eval::{global_topk, mean_class_accuracy};

/// One point of the accuracy-versus-clip-length curve.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    #[serde(rename = "T")]
    pub t: usize,
    pub mean_accuracy: f64,
    pub global_top1: f64,
    /// Multiply-adds of one clip forward pass, `T·D·C`. A deterministic
    /// stand-in for runtime.
    pub clip_multiply_adds: u64,
    pub epochs_run: usize,
}

/// Trains and evaluates one SIP-Net per clip length. Every point starts from
/// the same seed; points run in parallel and do not affect one another.
pub fn t_sweep(
    train_videos: &[LabeledVideo],
    test_videos: &[LabeledVideo],
    feature_dim: usize,
    classes: usize,
    t_values: &[usize],
    config: &TrainConfig,
) -> Result<Vec<SweepPoint>> {
    if t_values.is_empty() {
        return Err(Error::Argument("no clip lengths to sweep".into()));
    }
    let tubes = TrainingTube::from_videos(train_videos);
    let labels: Vec<usize> = test_videos.iter().map(|v| v.label).collect();
    t_values
        .par_iter()
        .map(|&t| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.sgd.seed);
            let mut head = SipNetHead::new(t, feature_dim, classes, &mut rng)?;
            let report = train(&mut head, &tubes, None, config)?;
            let preds = predict_videos(&head, test_videos)?;
            Ok(SweepPoint {
                t,
                mean_accuracy: mean_class_accuracy(&preds, &labels, classes)?
                    .mean
                    .unwrap_or(0.0),
                global_top1: global_topk(&preds, &labels, 1)?.unwrap_or(0.0),
                clip_multiply_adds: (t * feature_dim * classes) as u64,
                epochs_run: report.epoch_losses.len(),
            })
        })
        .collect()
}

pub fn sweep_csv(points: &[SweepPoint]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for p in points {
        w.serialize(p)
            .map_err(|e| Error::Argument(format!("sweep csv: {e}")))?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::Argument(format!("sweep csv: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    fn toy() -> Vec<LabeledVideo> {
        (0..6)
            .map(|i| LabeledVideo {
                video_id: format!("v{i}"),
                label: i % 2,
                tubes: vec![Tensor::from_fn(&[10, 2], |k| {
                    if i % 2 == 0 {
                        (k % 2) as f64
                    } else {
                        -((k % 2) as f64)
                    }
                })],
            })
            .collect()
    }

    #[test]
    fn one_row_per_t_and_work_grows() {
        let cfg = TrainConfig {
            epochs: 2,
            ..TrainConfig::default()
        };
        let pts = t_sweep(&toy(), &toy(), 2, 2, &[1, 4, 8], &cfg).unwrap();
        assert_eq!(pts.iter().map(|p| p.t).collect::<Vec<_>>(), vec![1, 4, 8]);
        assert!(pts
            .windows(2)
            .all(|w| w[0].clip_multiply_adds <= w[1].clip_multiply_adds));
        let single = t_sweep(&toy(), &toy(), 2, 2, &[4], &cfg).unwrap();
        assert_eq!(single.len(), 1);
        assert_eq!(single[0], pts[1]);
        let csv = sweep_csv(&pts).unwrap();
        assert!(csv.starts_with("T,mean_accuracy,global_top1,clip_multiply_adds,epochs_run\n"));
        assert_eq!(csv.lines().count(), 4);
    }
}
