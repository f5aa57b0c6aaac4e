use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Tube, TubeEntry};
use crate::error::{Error, Result};
use crate::pose::{Detection, Detections};

/// Interpolated frame stored inline in a tubes file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InlineEntry {
    pub frame: usize,
    pub score: f64,
    pub joints2d: Vec<[f64; 2]>,
    pub joint_scores: Vec<f64>,
    pub joints3d: Option<Vec<[f64; 3]>>,
    pub features: Option<Vec<f64>>,
}

/// One line of a tubes file. Real detections are referenced by their
/// 0-based position in the detections file (`refs`); interpolated frames
/// have a `null` reference and their values in `inline`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TubeRecord {
    pub video_id: String,
    pub frames: Vec<usize>,
    pub interpolated: Vec<bool>,
    pub boxes: Vec<[f64; 4]>,
    pub tube_score: f64,
    pub refs: Vec<Option<usize>>,
    pub inline: Vec<InlineEntry>,
}

impl TubeRecord {
    pub fn from_tube(video_id: &str, tube: &Tube) -> Self {
        let mut rec = TubeRecord {
            video_id: video_id.to_string(),
            frames: tube.frames(),
            interpolated: tube.entries.iter().map(|e| e.interpolated).collect(),
            boxes: tube.entries.iter().map(|e| e.detection.bbox.into()).collect(),
            tube_score: tube.tube_score,
            refs: Vec::with_capacity(tube.len()),
            inline: Vec::new(),
        };
        for e in &tube.entries {
            if e.interpolated {
                rec.refs.push(None);
                let d = &e.detection;
                rec.inline.push(InlineEntry {
                    frame: d.frame_index,
                    score: d.score,
                    joints2d: d.joints2d.clone(),
                    joint_scores: d.joint_scores.clone(),
                    joints3d: d.joints3d.clone(),
                    features: d.features.clone(),
                });
            } else {
                rec.refs.push(Some(e.detection.order));
            }
        }
        rec
    }

    /// Rebuilds the tube, resolving references against `dets`.
    pub fn resolve(&self, dets: &Detections) -> std::result::Result<Tube, String> {
        let n = self.frames.len();
        if self.interpolated.len() != n || self.boxes.len() != n || self.refs.len() != n {
            return Err("per-frame arrays differ in length".into());
        }
        let mut inline = self.inline.iter();
        let mut entries = Vec::with_capacity(n);
        for i in 0..n {
            let detection = match self.refs[i] {
                Some(order) => {
                    let d = dets
                        .by_order(order)
                        .ok_or_else(|| format!("reference {order} not in detections file"))?;
                    if d.frame_index != self.frames[i] {
                        return Err(format!(
                            "reference {order} is in frame {}, expected {}",
                            d.frame_index, self.frames[i]
                        ));
                    }
                    d.clone()
                }
                None => {
                    let e = inline
                        .next()
                        .ok_or("fewer inline entries than null references")?;
                    if e.frame != self.frames[i] {
                        return Err(format!("inline entry for frame {} out of place", e.frame));
                    }
                    Detection {
                        frame_index: e.frame,
                        bbox: self.boxes[i].into(),
                        score: e.score,
                        joints2d: e.joints2d.clone(),
                        joint_scores: e.joint_scores.clone(),
                        joints3d: e.joints3d.clone(),
                        features: e.features.clone(),
                        order: usize::MAX,
                    }
                }
            };
            entries.push(TubeEntry {
                detection,
                interpolated: self.refs[i].is_none(),
            });
        }
        if entries.windows(2).any(|w| w[1].frame() != w[0].frame() + 1) {
            return Err("frames are not consecutive".into());
        }
        Ok(Tube {
            entries,
            tube_score: self.tube_score,
        })
    }
}

pub fn save_tubes(path: &Path, video_id: &str, tubes: &[Tube]) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for t in tubes {
        serde_json::to_writer(&mut w, &TubeRecord::from_tube(video_id, t))
            .map_err(|e| Error::json(path, e))?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a tubes file written by [`save_tubes`], returning the video id
/// (empty when the file has no tubes) and the tubes.
pub fn load_tubes(path: &Path, dets: &Detections) -> Result<(String, Vec<Tube>)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut video_id = String::new();
    let mut tubes = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let err = |msg: String| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            msg,
        };
        let rec: TubeRecord = serde_json::from_str(line).map_err(|e| err(e.to_string()))?;
        if video_id.is_empty() {
            video_id = rec.video_id.clone();
        } else if video_id != rec.video_id {
            return Err(err(format!(
                "mixed video ids `{video_id}` and `{}`",
                rec.video_id
            )));
        }
        tubes.push(rec.resolve(dets).map_err(err)?);
    }
    Ok((video_id, tubes))
}
