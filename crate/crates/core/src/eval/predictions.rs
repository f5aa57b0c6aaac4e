use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linker::VideoScores;

/// Tolerance on the total mass of a probability vector.
pub const PROB_SUM_TOLERANCE: f64 = 1e-9;

/// Video predictions bound to a class list.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictionSet {
    pub classes: Vec<String>,
    pub videos: BTreeMap<String, VideoScores>,
}

#[derive(Serialize, Deserialize)]
struct PredictionLine {
    video_id: String,
    /// `null` for a video without tubes.
    probs: Option<Vec<f64>>,
}

impl PredictionSet {
    pub fn new(classes: Vec<String>) -> Self {
        PredictionSet {
            classes,
            videos: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, video_id: impl Into<String>, scores: VideoScores) -> Result<()> {
        let video_id = video_id.into();
        check_vector(&video_id, &scores, self.classes.len())?;
        self.videos.insert(video_id, scores);
        Ok(())
    }

    pub fn get(&self, video_id: &str) -> Option<&VideoScores> {
        self.videos.get(video_id)
    }

    pub fn len(&self) -> usize {
        self.videos.len()
    }

    pub fn is_empty(&self) -> bool {
        self.videos.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        for (id, s) in &self.videos {
            check_vector(id, s, self.classes.len())?;
        }
        Ok(())
    }

    /// Predictions in the order of `ids`; every id must be present.
    pub fn aligned<S: AsRef<str>>(&self, ids: &[S]) -> Result<Vec<VideoScores>> {
        ids.iter()
            .map(|id| {
                self.videos.get(id.as_ref()).cloned().ok_or_else(|| {
                    Error::Argument(format!("no prediction for video `{}`", id.as_ref()))
                })
            })
            .collect()
    }
}

fn check_vector(video_id: &str, scores: &VideoScores, classes: usize) -> Result<()> {
    let VideoScores::Scores(p) = scores else {
        return Ok(());
    };
    if p.len() != classes {
        return Err(Error::Argument(format!(
            "video `{video_id}`: {} probabilities for {classes} classes",
            p.len()
        )));
    }
    if p.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::NonFinite(format!(
            "video `{video_id}`: probabilities must be finite and non-negative"
        )));
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > PROB_SUM_TOLERANCE {
        return Err(Error::Argument(format!(
            "video `{video_id}`: probabilities sum to {sum}"
        )));
    }
    Ok(())
}

/// Writes one `{"video_id", "probs"}` object per line, sorted by id.
pub fn save_predictions(path: &Path, set: &PredictionSet) -> Result<()> {
    let mut out = Vec::new();
    for (id, s) in &set.videos {
        let line = PredictionLine {
            video_id: id.clone(),
            probs: match s {
                VideoScores::Scores(p) => Some(p.clone()),
                VideoScores::NoTube => None,
            },
        };
        serde_json::to_writer(&mut out, &line).map_err(|e| Error::json(path, e))?;
        out.push(b'\n');
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&out).map_err(|e| Error::io(path, e))
}

pub fn load_predictions(path: &Path, classes: Vec<String>) -> Result<PredictionSet> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut set = PredictionSet::new(classes);
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |msg: String| Error::Parse {
            path: path.into(),
            line: i + 1,
            msg,
        };
        let l: PredictionLine = serde_json::from_str(line).map_err(|e| parse_err(e.to_string()))?;
        if set.videos.contains_key(&l.video_id) {
            return Err(parse_err(format!("duplicate video `{}`", l.video_id)));
        }
        let scores = l.probs.map_or(VideoScores::NoTube, VideoScores::Scores);
        set.insert(l.video_id, scores)
            .map_err(|e| parse_err(e.to_string()))?;
    }
    Ok(set)
}

/// Mean of two prediction sets over the same videos and classes. A video
/// without tubes in one set takes the other set's vector.
pub fn late_fusion(a: &PredictionSet, b: &PredictionSet) -> Result<PredictionSet> {
    if a.classes != b.classes {
        return Err(Error::Argument("prediction sets use different class lists".into()));
    }
    if !a.videos.keys().eq(b.videos.keys()) {
        return Err(Error::Argument("prediction sets cover different videos".into()));
    }
    let mut out = PredictionSet::new(a.classes.clone());
    for ((id, x), y) in a.videos.iter().zip(b.videos.values()) {
        let fused = match (x, y) {
            (VideoScores::Scores(p), VideoScores::Scores(q)) => {
                VideoScores::Scores(p.iter().zip(q).map(|(u, v)| (u + v) / 2.0).collect())
            }
            (VideoScores::Scores(_), VideoScores::NoTube) => x.clone(),
            (VideoScores::NoTube, _) => y.clone(),
        };
        out.videos.insert(id.clone(), fused);
    }
    Ok(out)
}
