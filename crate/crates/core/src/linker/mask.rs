use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Tube;
use crate::error::{Error, Result};

/// Mid-grey fill colour.
pub const GREY: [u8; 3] = [128, 128, 128];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskMode {
    /// Grey out every tube box.
    MaskTubes,
    /// Grey out everything except the tube boxes.
    MaskBackground,
}

impl std::str::FromStr for MaskMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mask_tubes" => Ok(MaskMode::MaskTubes),
            "mask_background" => Ok(MaskMode::MaskBackground),
            other => Err(Error::Argument(format!("unknown mask mode `{other}`"))),
        }
    }
}

/// Half-open pixel rectangle `[x0, x1) × [y0, y1)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "[u32; 4]", into = "[u32; 4]")]
pub struct PixelRect {
    pub x0: u32,
    pub y0: u32,
    pub x1: u32,
    pub y1: u32,
}

impl From<[u32; 4]> for PixelRect {
    fn from([x0, y0, x1, y1]: [u32; 4]) -> Self {
        PixelRect { x0, y0, x1, y1 }
    }
}

impl From<PixelRect> for [u32; 4] {
    fn from(r: PixelRect) -> Self {
        [r.x0, r.y0, r.x1, r.y1]
    }
}

impl PixelRect {
    pub fn contains(&self, x: u32, y: u32) -> bool {
        (self.x0..self.x1).contains(&x) && (self.y0..self.y1).contains(&y)
    }
}

/// Pixel rectangle covering a floating-point box, clipped to the image.
fn clip_box(b: [f64; 4], width: u32, height: u32) -> Option<PixelRect> {
    let cx = |v: f64| v.clamp(0.0, width as f64) as u32;
    let cy = |v: f64| v.clamp(0.0, height as f64) as u32;
    let r = PixelRect {
        x0: cx(b[0].floor()),
        y0: cy(b[1].floor()),
        x1: cx(b[2].ceil()),
        y1: cy(b[3].ceil()),
    };
    (r.x0 < r.x1 && r.y0 < r.y1).then_some(r)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaskFrame {
    pub frame: usize,
    pub boxes: Vec<PixelRect>,
}

/// Masking geometry for one video.
///
/// With [`MaskMode::MaskTubes`] the listed boxes are filled and unlisted
/// frames are left untouched. With [`MaskMode::MaskBackground`] the listed
/// boxes are preserved and everything else, including unlisted frames, is
/// filled.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaskSpec {
    pub mode: MaskMode,
    pub fill: [u8; 3],
    pub width: u32,
    pub height: u32,
    pub frames: Vec<MaskFrame>,
}

impl MaskSpec {
    pub fn boxes(&self, frame: usize) -> &[PixelRect] {
        self.frames
            .binary_search_by_key(&frame, |f| f.frame)
            .map_or(&[], |i| self.frames[i].boxes.as_slice())
    }

    pub fn is_filled(&self, frame: usize, x: u32, y: u32) -> bool {
        let inside = self.boxes(frame).iter().any(|r| r.contains(x, y));
        match self.mode {
            MaskMode::MaskTubes => inside,
            MaskMode::MaskBackground => !inside,
        }
    }

    /// Row-major fill mask of one frame.
    pub fn rasterize(&self, frame: usize) -> Vec<bool> {
        let mut out = Vec::with_capacity((self.width * self.height) as usize);
        for y in 0..self.height {
            for x in 0..self.width {
                out.push(self.is_filled(frame, x, y));
            }
        }
        out
    }
}

pub fn make_mask_spec(tubes: &[Tube], mode: MaskMode, image_size: (u32, u32)) -> MaskSpec {
    let (width, height) = image_size;
    let mut frames: BTreeMap<usize, Vec<PixelRect>> = BTreeMap::new();
    for t in tubes {
        for e in &t.entries {
            if let Some(r) = clip_box(e.detection.bbox.into(), width, height) {
                frames.entry(e.frame()).or_default().push(r);
            }
        }
    }
    MaskSpec {
        mode,
        fill: GREY,
        width,
        height,
        frames: frames
            .into_iter()
            .map(|(frame, boxes)| MaskFrame { frame, boxes })
            .collect(),
    }
}

pub fn save_mask_spec(path: &Path, spec: &MaskSpec) -> Result<()> {
    let text = serde_json::to_string(spec).map_err(|e| Error::json(path, e))?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub fn load_mask_spec(path: &Path) -> Result<MaskSpec> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(path, e))
}
