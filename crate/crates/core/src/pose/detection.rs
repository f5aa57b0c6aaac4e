use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Width of the mid-level pose features of the reference pose estimator.
pub const REFERENCE_FEATURE_DIM: usize = 2048;

/// Axis-aligned box `(x_min, y_min, x_max, y_max)` in pixels.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct BBox {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl From<[f64; 4]> for BBox {
    fn from([x_min, y_min, x_max, y_max]: [f64; 4]) -> Self {
        BBox {
            x_min,
            y_min,
            x_max,
            y_max,
        }
    }
}

impl From<BBox> for [f64; 4] {
    fn from(b: BBox) -> Self {
        [b.x_min, b.y_min, b.x_max, b.y_max]
    }
}

impl BBox {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Self {
        BBox {
            x_min,
            y_min,
            x_max,
            y_max,
        }
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn is_valid(&self) -> bool {
        [self.x_min, self.y_min, self.x_max, self.y_max]
            .iter()
            .all(|v| v.is_finite())
            && self.x_min < self.x_max
            && self.y_min < self.y_max
    }

    pub fn lerp(&self, other: &BBox, alpha: f64) -> BBox {
        let l = |a: f64, b: f64| a + (b - a) * alpha;
        BBox {
            x_min: l(self.x_min, other.x_min),
            y_min: l(self.y_min, other.y_min),
            x_max: l(self.x_max, other.x_max),
            y_max: l(self.y_max, other.y_max),
        }
    }
}

/// One person candidate in one frame.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Detection {
    #[serde(rename = "frame")]
    pub frame_index: usize,
    #[serde(rename = "box")]
    pub bbox: BBox,
    pub score: f64,
    pub joints2d: Vec<[f64; 2]>,
    pub joint_scores: Vec<f64>,
    pub joints3d: Option<Vec<[f64; 3]>>,
    pub features: Option<Vec<f64>>,
    /// Position of the detection in its source file; used to break ties.
    #[serde(skip)]
    pub order: usize,
}

impl PartialEq for Detection {
    fn eq(&self, o: &Self) -> bool {
        self.frame_index == o.frame_index
            && self.bbox == o.bbox
            && self.score == o.score
            && self.joints2d == o.joints2d
            && self.joint_scores == o.joint_scores
            && self.joints3d == o.joints3d
            && self.features == o.features
    }
}

impl Detection {
    pub fn joint_count(&self) -> usize {
        self.joints2d.len()
    }

    fn validate(&self) -> std::result::Result<(), String> {
        if !self.bbox.is_valid() {
            return Err(format!("invalid box {:?}", <[f64; 4]>::from(self.bbox)));
        }
        if !(0.0..=1.0).contains(&self.score) {
            return Err(format!("score {} outside [0, 1]", self.score));
        }
        if self.joint_scores.len() != self.joints2d.len() {
            return Err(format!(
                "{} joint scores for {} joints",
                self.joint_scores.len(),
                self.joints2d.len()
            ));
        }
        if let Some(j3) = &self.joints3d {
            if j3.len() != self.joints2d.len() {
                return Err(format!(
                    "{} 3D joints for {} 2D joints",
                    j3.len(),
                    self.joints2d.len()
                ));
            }
        }
        let finite = self.joints2d.iter().flatten().all(|v| v.is_finite())
            && self.joint_scores.iter().all(|v| v.is_finite())
            && self
                .joints3d
                .iter()
                .flatten()
                .flatten()
                .all(|v| v.is_finite())
            && self.features.iter().flatten().all(|v| v.is_finite());
        if !finite {
            return Err("non-finite coordinate or feature".into());
        }
        Ok(())
    }
}

/// Optional expectations checked while loading.
#[derive(Clone, Copy, Debug, Default)]
pub struct DetectionSchema {
    pub joints: Option<usize>,
    pub feature_dim: Option<usize>,
}

/// Detections of one video grouped by frame; each frame sorted by
/// descending score, ties kept in file order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Detections {
    frames: BTreeMap<usize, Vec<Detection>>,
    /// `order` -> (frame, position within the frame list).
    index: Vec<(usize, usize)>,
}

impl Detections {
    pub fn new() -> Self {
        Self::default()
    }

    /// Groups and sorts detections; `order` is reassigned from input order.
    pub fn from_vec(dets: Vec<Detection>) -> Self {
        let mut frames: BTreeMap<usize, Vec<Detection>> = BTreeMap::new();
        for (i, mut d) in dets.into_iter().enumerate() {
            d.order = i;
            frames.entry(d.frame_index).or_default().push(d);
        }
        let mut index = vec![(0, 0); frames.values().map(Vec::len).sum()];
        for (&f, list) in frames.iter_mut() {
            list.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.order.cmp(&b.order)));
            for (pos, d) in list.iter().enumerate() {
                index[d.order] = (f, pos);
            }
        }
        Detections { frames, index }
    }

    pub fn frames(&self) -> &BTreeMap<usize, Vec<Detection>> {
        &self.frames
    }

    pub fn frame(&self, index: usize) -> &[Detection] {
        self.frames.get(&index).map_or(&[], Vec::as_slice)
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn len(&self) -> usize {
        self.frames.values().map(Vec::len).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Detection> {
        self.frames.values().flatten()
    }

    pub fn joint_count(&self) -> Option<usize> {
        self.iter().next().map(Detection::joint_count)
    }

    pub fn feature_dim(&self) -> Option<usize> {
        self.iter().find_map(|d| d.features.as_ref().map(Vec::len))
    }

    /// Detection with the given file position, if present.
    pub fn by_order(&self, order: usize) -> Option<&Detection> {
        let &(f, pos) = self.index.get(order)?;
        self.frames.get(&f).map(|l| &l[pos])
    }
}

pub fn load_detections(path: &Path) -> Result<Detections> {
    load_detections_with(path, &DetectionSchema::default())
}

pub fn load_detections_with(path: &Path, schema: &DetectionSchema) -> Result<Detections> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut dets = Vec::new();
    let mut joints = schema.joints;
    let mut feature_dim = schema.feature_dim;
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |msg: String| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            msg,
        };
        let det: Detection = serde_json::from_str(line).map_err(|e| parse_err(e.to_string()))?;
        det.validate().map_err(parse_err)?;
        let schema_err = |msg: String| Error::Schema {
            path: path.to_path_buf(),
            msg: format!("line {}: {msg}", i + 1),
        };
        match joints {
            Some(j) if j != det.joint_count() => {
                return Err(schema_err(format!(
                    "expected {j} joints, found {}",
                    det.joint_count()
                )))
            }
            None => joints = Some(det.joint_count()),
            _ => {}
        }
        if let Some(f) = &det.features {
            match feature_dim {
                Some(d) if d != f.len() => {
                    return Err(schema_err(format!(
                        "expected feature dimension {d}, found {}",
                        f.len()
                    )))
                }
                None => feature_dim = Some(f.len()),
                _ => {}
            }
        }
        dets.push(det);
    }
    Ok(Detections::from_vec(dets))
}

/// Writes one JSON object per line, frame by frame.
pub fn save_detections(path: &Path, dets: &Detections) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for d in dets.iter() {
        serde_json::to_writer(&mut w, d).map_err(|e| Error::json(path, e))?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Image resolution of one video, stored next to its detections file.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VideoMeta {
    pub width: u32,
    pub height: u32,
}

/// `clip.jsonl` -> `clip.meta.json`.
pub fn meta_path_for(detections_path: &Path) -> PathBuf {
    detections_path.with_extension("meta.json")
}

pub fn load_video_meta(path: &Path) -> Result<VideoMeta> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let meta: VideoMeta = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
    if meta.width == 0 || meta.height == 0 {
        return Err(Error::Schema {
            path: path.into(),
            msg: "image size must be positive".into(),
        });
    }
    Ok(meta)
}

pub fn save_video_meta(path: &Path, meta: &VideoMeta) -> Result<()> {
    let text = serde_json::to_string(meta).map_err(|e| Error::json(path, e))?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

/// A 2D joint in image-normalized coordinates plus its confidence.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalizedJoint {
    pub x: f64,
    pub y: f64,
    pub s: f64,
}

/// `x = px/W − 0.5`, `y = py/H − 0.5`, no clamping: joints of truncated
/// bodies may land outside `[−0.5, 0.5]`.
pub fn normalize_joints(det: &Detection, image_size: (f64, f64)) -> Result<Vec<NormalizedJoint>> {
    let (w, h) = image_size;
    if !(w > 0.0 && h > 0.0) {
        return Err(Error::Argument(format!(
            "image size must be positive, got {w}×{h}"
        )));
    }
    Ok(det
        .joints2d
        .iter()
        .zip(&det.joint_scores)
        .map(|(&[px, py], &s)| NormalizedJoint {
            x: px / w - 0.5,
            y: py / h - 0.5,
            s,
        })
        .collect())
}

/// Pixel coordinates back from [`normalize_joints`].
pub fn denormalize_joints(joints: &[NormalizedJoint], image_size: (f64, f64)) -> Vec<[f64; 2]> {
    let (w, h) = image_size;
    joints
        .iter()
        .map(|j| [(j.x + 0.5) * w, (j.y + 0.5) * h])
        .collect()
}
