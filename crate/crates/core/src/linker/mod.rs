//! Greedy linking of per-frame person detections into human tubes.
//!
//! Starting from the highest-scored unused detection, a tube is grown
//! frame by frame in both temporal directions. A detection in the next
//! frame is accepted when its IoU with the last accepted box exceeds the
//! threshold; otherwise later frames are tried and skipped frames are filled
//! by linear interpolation. A direction stops after `max_gap` consecutive
//! frames without a match. The tube's detections are then removed and the
//! procedure repeats until no detection is left.

mod io;
mod mask;

pub use io::{load_tubes, save_tubes, TubeRecord};
pub use mask::{load_mask_spec, make_mask_spec, save_mask_spec, MaskMode, MaskSpec, PixelRect, GREY};

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pose::{BBox, Detection, Detections};

/// Intersection over union of two boxes.
pub fn iou(a: &BBox, b: &BBox) -> Result<f64> {
    if !a.is_valid() || !b.is_valid() {
        return Err(Error::Argument(format!(
            "degenerate box in IoU: {:?} / {:?}",
            <[f64; 4]>::from(*a),
            <[f64; 4]>::from(*b)
        )));
    }
    let iw = (a.x_max.min(b.x_max) - a.x_min.max(b.x_min)).max(0.0);
    let ih = (a.y_max.min(b.y_max) - a.y_min.max(b.y_min)).max(0.0);
    let inter = iw * ih;
    if inter == 0.0 {
        return Ok(0.0);
    }
    Ok(inter / (a.area() + b.area() - inter))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinkerConfig {
    pub iou_threshold: f64,
    pub max_gap: usize,
}

impl Default for LinkerConfig {
    fn default() -> Self {
        LinkerConfig {
            iou_threshold: 0.3,
            max_gap: 10,
        }
    }
}

impl LinkerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.iou_threshold > 0.0 && self.iou_threshold <= 1.0) {
            return Err(Error::Config(format!(
                "IoU threshold must lie in (0, 1], got {}",
                self.iou_threshold
            )));
        }
        if self.max_gap == 0 {
            return Err(Error::Config("max_gap must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TubeEntry {
    pub detection: Detection,
    pub interpolated: bool,
}

impl TubeEntry {
    pub fn frame(&self) -> usize {
        self.detection.frame_index
    }
}

/// A person linked through consecutive frames.
#[derive(Clone, Debug, PartialEq)]
pub struct Tube {
    pub entries: Vec<TubeEntry>,
    /// Mean score of the non-interpolated detections.
    pub tube_score: f64,
}

impl Tube {
    pub(crate) fn from_entries(entries: Vec<TubeEntry>) -> Self {
        let real: Vec<f64> = entries
            .iter()
            .filter(|e| !e.interpolated)
            .map(|e| e.detection.score)
            .collect();
        let tube_score = if real.is_empty() {
            0.0
        } else {
            real.iter().sum::<f64>() / real.len() as f64
        };
        Tube {
            entries,
            tube_score,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn frames(&self) -> Vec<usize> {
        self.entries.iter().map(TubeEntry::frame).collect()
    }

    pub fn first_frame(&self) -> usize {
        self.entries[0].frame()
    }

    /// File positions of the real (non-interpolated) detections.
    pub fn source_orders(&self) -> Vec<usize> {
        self.entries
            .iter()
            .filter(|e| !e.interpolated)
            .map(|e| e.detection.order)
            .collect()
    }

    /// Stacked per-frame feature vectors, or `None` if any frame lacks them.
    pub fn feature_matrix(&self) -> Option<Vec<Vec<f64>>> {
        self.entries
            .iter()
            .map(|e| e.detection.features.clone())
            .collect()
    }
}

fn lerp_vec(a: &[f64], b: &[f64], alpha: f64) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + (y - x) * alpha).collect()
}

fn lerp_arr<const N: usize>(a: &[[f64; N]], b: &[[f64; N]], alpha: f64) -> Vec<[f64; N]> {
    a.iter()
        .zip(b)
        .map(|(p, q)| std::array::from_fn(|i| p[i] + (q[i] - p[i]) * alpha))
        .collect()
}

/// Linear interpolation between two detections for an intermediate frame.
pub fn interpolate_detection(a: &Detection, b: &Detection, frame: usize) -> Detection {
    let span = b.frame_index as f64 - a.frame_index as f64;
    let alpha = (frame as f64 - a.frame_index as f64) / span;
    Detection {
        frame_index: frame,
        bbox: a.bbox.lerp(&b.bbox, alpha),
        score: a.score + (b.score - a.score) * alpha,
        joints2d: lerp_arr(&a.joints2d, &b.joints2d, alpha),
        joint_scores: lerp_vec(&a.joint_scores, &b.joint_scores, alpha),
        joints3d: match (&a.joints3d, &b.joints3d) {
            (Some(p), Some(q)) => Some(lerp_arr(p, q, alpha)),
            _ => None,
        },
        features: match (&a.features, &b.features) {
            (Some(p), Some(q)) => Some(lerp_vec(p, q, alpha)),
            _ => None,
        },
        order: usize::MAX,
    }
}

struct Linker<'a> {
    dets: &'a Detections,
    config: LinkerConfig,
    used: HashSet<usize>,
    first: usize,
    last: usize,
}

#[derive(Clone, Copy)]
enum Direction {
    Forward,
    Backward,
}

impl<'a> Linker<'a> {
    fn seed(&self) -> Option<&'a Detection> {
        let mut best: Option<&Detection> = None;
        // Frames ascending and lists in (score desc, file order) order, so the
        // first strictly greater score wins ties by (frame, file order).
        for list in self.dets.frames().values() {
            if let Some(d) = list.iter().find(|d| !self.used.contains(&d.order)) {
                if best.is_none_or(|b| d.score > b.score) {
                    best = Some(d);
                }
            }
        }
        best
    }

    fn best_match(&self, from: &Detection, frame: usize) -> Result<Option<&'a Detection>> {
        let mut best: Option<(&Detection, f64)> = None;
        for cand in self.dets.frame(frame) {
            if self.used.contains(&cand.order) {
                continue;
            }
            let v = iou(&from.bbox, &cand.bbox)?;
            if v > self.config.iou_threshold && best.is_none_or(|(_, bv)| v > bv) {
                best = Some((cand, v));
            }
        }
        Ok(best.map(|(d, _)| d))
    }

    /// Grows one half-tube from `seed`, excluding the seed itself, in
    /// temporal order away from it.
    fn grow(&mut self, seed: &Detection, dir: Direction) -> Result<Vec<TubeEntry>> {
        let mut out = Vec::new();
        let mut current = seed.clone();
        let mut misses = 0;
        let mut frame = seed.frame_index;
        loop {
            if misses >= self.config.max_gap {
                break;
            }
            frame = match dir {
                Direction::Forward if frame < self.last => frame + 1,
                Direction::Backward if frame > self.first => frame - 1,
                _ => break,
            };
            match self.best_match(&current, frame)? {
                Some(m) => {
                    let gap: Vec<usize> = match dir {
                        Direction::Forward => (current.frame_index + 1..frame).collect(),
                        Direction::Backward => (frame + 1..current.frame_index).rev().collect(),
                    };
                    for f in gap {
                        out.push(TubeEntry {
                            detection: interpolate_detection(&current, m, f),
                            interpolated: true,
                        });
                    }
                    self.used.insert(m.order);
                    out.push(TubeEntry {
                        detection: m.clone(),
                        interpolated: false,
                    });
                    current = m.clone();
                    misses = 0;
                }
                None => misses += 1,
            }
        }
        Ok(out)
    }
}

/// Links all detections of one video into tubes, in extraction order.
pub fn link_tubes(dets: &Detections, config: &LinkerConfig) -> Result<Vec<Tube>> {
    config.validate()?;
    let (Some(&first), Some(&last)) = (dets.frames().keys().next(), dets.frames().keys().last())
    else {
        return Ok(Vec::new());
    };
    let mut linker = Linker {
        dets,
        config: *config,
        used: HashSet::new(),
        first,
        last,
    };
    let mut tubes = Vec::new();
    while let Some(seed) = linker.seed() {
        linker.used.insert(seed.order);
        let forward = linker.grow(seed, Direction::Forward)?;
        let mut backward = linker.grow(seed, Direction::Backward)?;
        backward.reverse();
        let mut entries = backward;
        entries.push(TubeEntry {
            detection: seed.clone(),
            interpolated: false,
        });
        entries.extend(forward);
        tubes.push(Tube::from_entries(entries));
    }
    Ok(tubes)
}

/// Class scores of a video: the per-class maximum over its tubes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VideoScores {
    Scores(Vec<f64>),
    /// No tube was extracted; the video counts as misclassified.
    NoTube,
}

pub fn video_class_scores(tubes: &[Tube], per_tube_scores: &[Vec<f64>]) -> Result<VideoScores> {
    if tubes.len() != per_tube_scores.len() {
        return Err(Error::Argument(format!(
            "{} score vectors for {} tubes",
            per_tube_scores.len(),
            tubes.len()
        )));
    }
    max_over_tubes(per_tube_scores)
}

/// Element-wise maximum of the score vectors; [`VideoScores::NoTube`] when empty.
pub fn max_over_tubes(per_tube_scores: &[Vec<f64>]) -> Result<VideoScores> {
    let Some(first) = per_tube_scores.first() else {
        return Ok(VideoScores::NoTube);
    };
    let mut out = first.clone();
    for s in &per_tube_scores[1..] {
        if s.len() != out.len() {
            return Err(Error::Argument(format!(
                "score vectors of length {} and {}",
                out.len(),
                s.len()
            )));
        }
        for (o, &v) in out.iter_mut().zip(s) {
            *o = o.max(v);
        }
    }
    Ok(VideoScores::Scores(out))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Coverage {
    pub videos: usize,
    pub videos_without_tubes: usize,
    pub fraction_without_tubes: f64,
    pub without_tubes: Vec<String>,
}

/// Fraction of `video_ids` with zero tubes; ids missing from `tubes` count
/// as having none.
pub fn tube_coverage<S: AsRef<str>>(
    video_ids: &[S],
    tubes: &BTreeMap<String, Vec<Tube>>,
) -> Coverage {
    let without: Vec<String> = video_ids
        .iter()
        .map(AsRef::as_ref)
        .filter(|v| tubes.get(*v).is_none_or(Vec::is_empty))
        .map(str::to_string)
        .collect();
    let videos = video_ids.len();
    Coverage {
        videos,
        videos_without_tubes: without.len(),
        fraction_without_tubes: if videos == 0 {
            0.0
        } else {
            without.len() as f64 / videos as f64
        },
        without_tubes: without,
    }
}
