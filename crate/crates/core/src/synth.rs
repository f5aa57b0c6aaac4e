//! Synthetic pose datasets with a known long-range temporal signal.
//!
//! Each class has a motion signature: a drift velocity of the person along
//! a latent axis, plus a periodic limb oscillation of class-specific
//! frequency. Start positions are drawn so that single-frame statistics do
//! not reveal the class; only the displacement over many frames does. The
//! latent trajectory is embedded into `D` feature dimensions by a fixed
//! random projection with Gaussian noise, and also drives the 2D/3D joints.

use std::f64::consts::TAU;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pose::{
    meta_path_for, save_detections, save_manifest, save_taxonomy, BBox, ClassTaxonomy, Detection,
    Detections, Skeleton, SkeletonLayout, VideoManifestEntry, VideoMeta,
};

/// Latent dimensions: drift position, then the two oscillation phases.
const LATENT: usize = 3;
const FPS: f64 = 25.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MotionSignature {
    /// Latent units per frame.
    pub velocity: f64,
    /// Cycles per frame.
    pub frequency: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub classes: usize,
    pub videos_per_class: usize,
    /// Videos per class held out for testing; the rest are for training.
    pub test_per_class: usize,
    pub min_length: usize,
    pub max_length: usize,
    pub feature_dim: usize,
    /// Latent start positions are uniform in `±position_range`.
    pub position_range: f64,
    pub velocity_step: f64,
    pub base_frequency: f64,
    pub frequency_step: f64,
    pub feature_scale: f64,
    /// Noise standard deviation relative to the feature scale.
    pub noise: f64,
    pub image_width: u32,
    pub image_height: u32,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            classes: 5,
            videos_per_class: 40,
            test_per_class: 10,
            min_length: 40,
            max_length: 64,
            feature_dim: 64,
            position_range: 3.0,
            velocity_step: 0.06,
            base_frequency: 0.05,
            frequency_step: 0.03,
            feature_scale: 0.4,
            noise: 0.2,
            image_width: 320,
            image_height: 240,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    /// Velocities symmetric around zero, frequencies increasing with the class.
    pub fn signatures(&self) -> Vec<MotionSignature> {
        let mid = (self.classes as f64 - 1.0) / 2.0;
        (0..self.classes)
            .map(|c| MotionSignature {
                velocity: (c as f64 - mid) * self.velocity_step,
                frequency: self.base_frequency + c as f64 * self.frequency_step,
            })
            .collect()
    }

    pub fn class_names(&self) -> Vec<String> {
        (0..self.classes).map(|c| format!("motion_{c:02}")).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.classes < 2 {
            return bad(format!("need at least 2 classes, got {}", self.classes));
        }
        if self.test_per_class >= self.videos_per_class {
            return bad(format!(
                "{} test videos leave no training videos out of {}",
                self.test_per_class, self.videos_per_class
            ));
        }
        if self.min_length == 0 || self.min_length > self.max_length {
            return bad(format!(
                "bad length range {}..={}",
                self.min_length, self.max_length
            ));
        }
        if self.feature_dim == 0 || self.image_width == 0 || self.image_height == 0 {
            return bad("feature dimension and image size must be positive".into());
        }
        for (name, v) in [
            ("position_range", self.position_range),
            ("velocity_step", self.velocity_step),
            ("frequency_step", self.frequency_step),
            ("feature_scale", self.feature_scale),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        if !(self.noise.is_finite() && self.noise >= 0.0) || !self.base_frequency.is_finite() {
            return bad("noise and base frequency must be finite, noise non-negative".into());
        }
        let sig = self.signatures();
        for i in 0..sig.len() {
            for j in i + 1..sig.len() {
                if sig[i] == sig[j] {
                    return bad(format!("classes {i} and {j} share a motion signature"));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticVideo {
    pub entry: VideoManifestEntry,
    pub label: usize,
    pub split: Split,
    pub detections: Detections,
    pub meta: VideoMeta,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticDataset {
    pub spec: SyntheticSpec,
    pub taxonomy: ClassTaxonomy,
    pub videos: Vec<SyntheticVideo>,
}

/// Rest pose in pixels relative to the hip centre, joint order of
/// [`SkeletonLayout::Lcr13`].
const REST_2D: [[f64; 2]; 13] = [
    [-8.0, 50.0],
    [8.0, 50.0],
    [-8.0, 25.0],
    [8.0, 25.0],
    [-8.0, 0.0],
    [8.0, 0.0],
    [-20.0, -15.0],
    [20.0, -15.0],
    [-18.0, -30.0],
    [18.0, -30.0],
    [-12.0, -45.0],
    [12.0, -45.0],
    [0.0, -60.0],
];
const WRISTS: [usize; 2] = [6, 7];
const PIXELS_PER_UNIT: f64 = 20.0;
const ARM_SWING: f64 = 12.0;
const METRES_PER_PIXEL: f64 = 0.015;

fn round6(v: f64) -> f64 {
    (v * 1e6).round() / 1e6
}

pub fn generate(spec: &SyntheticSpec) -> Result<SyntheticDataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let col = 1.0 / (spec.feature_dim as f64).sqrt();
    let projection: Vec<[f64; LATENT]> = (0..spec.feature_dim)
        .map(|_| std::array::from_fn(|_| col * rng.sample::<f64, _>(StandardNormal)))
        .collect();
    let noise = Normal::new(0.0, spec.feature_scale * spec.noise)
        .map_err(|e| Error::Config(format!("noise: {e}")))?;
    let names = spec.class_names();
    let taxonomy = ClassTaxonomy::from_classes(names.iter().cloned());
    let (w, h) = (spec.image_width as f64, spec.image_height as f64);

    let mut videos = Vec::with_capacity(spec.classes * spec.videos_per_class);
    for (label, sig) in spec.signatures().into_iter().enumerate() {
        for i in 0..spec.videos_per_class {
            let len = rng.random_range(spec.min_length..=spec.max_length);
            let p0 = rng.random_range(-spec.position_range..=spec.position_range)
                - sig.velocity * (len - 1) as f64 / 2.0;
            let phase = rng.random_range(0.0..TAU);
            let mut dets = Vec::with_capacity(len);
            for t in 0..len {
                let angle = TAU * sig.frequency * t as f64 + phase;
                let z = [p0 + sig.velocity * t as f64, angle.sin(), angle.cos()];
                let features: Vec<f64> = projection
                    .iter()
                    .map(|p| {
                        let clean: f64 = p.iter().zip(&z).map(|(a, b)| a * b).sum();
                        round6(spec.feature_scale * clean + noise.sample(&mut rng))
                    })
                    .collect();
                let (cx, cy) = (w / 2.0 + PIXELS_PER_UNIT * z[0], h / 2.0);
                let mut joints2d: Vec<[f64; 2]> =
                    REST_2D.iter().map(|r| [cx + r[0], cy + r[1]]).collect();
                for (k, &wj) in WRISTS.iter().enumerate() {
                    let side = if k == 0 { -1.0 } else { 1.0 };
                    joints2d[wj][0] += side * ARM_SWING * z[2];
                    joints2d[wj][1] += ARM_SWING * z[1];
                }
                let joints2d: Vec<[f64; 2]> =
                    joints2d.iter().map(|p| [round6(p[0]), round6(p[1])]).collect();
                let joints3d = joints2d
                    .iter()
                    .map(|p| {
                        [
                            round6((p[0] - w / 2.0) * METRES_PER_PIXEL),
                            round6((p[1] - h / 2.0) * METRES_PER_PIXEL),
                            0.0,
                        ]
                    })
                    .collect();
                let (mut x0, mut y0, mut x1, mut y1) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
                for p in &joints2d {
                    x0 = x0.min(p[0]);
                    y0 = y0.min(p[1]);
                    x1 = x1.max(p[0]);
                    y1 = y1.max(p[1]);
                }
                dets.push(Detection {
                    frame_index: t,
                    bbox: BBox::new(x0 - 5.0, y0 - 5.0, x1 + 5.0, y1 + 5.0),
                    score: 0.9,
                    joint_scores: vec![0.9; joints2d.len()],
                    joints2d,
                    joints3d: Some(joints3d),
                    features: Some(features),
                    order: 0,
                });
            }
            let video_id = format!("{}_{i:03}", names[label]);
            let split = if i >= spec.videos_per_class - spec.test_per_class {
                Split::Test
            } else {
                Split::Train
            };
            videos.push(SyntheticVideo {
                entry: VideoManifestEntry {
                    source_url: format!("synthetic://{}/{video_id}", spec.seed),
                    video_id,
                    start: 0.0,
                    end: len as f64 / FPS,
                    label: names[label].clone(),
                    is_mime_artist: false,
                    object_relevant: false,
                    scene_relevant: false,
                },
                label,
                split,
                detections: Detections::from_vec(dets),
                meta: VideoMeta {
                    width: spec.image_width,
                    height: spec.image_height,
                },
            });
        }
    }
    debug_assert_eq!(Skeleton::layout(SkeletonLayout::Lcr13).joint_count(), REST_2D.len());
    Ok(SyntheticDataset {
        spec: spec.clone(),
        taxonomy,
        videos,
    })
}

/// Files written by [`write_dataset`], relative to its output directory.
pub mod layout {
    pub const DETECTIONS_DIR: &str = "detections";
    pub const TAXONOMY: &str = "taxonomy.json";
    pub const TRAIN_MANIFEST: &str = "train_manifest.csv";
    pub const TEST_MANIFEST: &str = "test_manifest.csv";
    pub const SPEC: &str = "synth_spec.json";
}

/// Detection files with image-size sidecars, a taxonomy, one manifest per
/// split, and the spec itself. Returns the detections directory.
pub fn write_dataset(ds: &SyntheticDataset, out_dir: &Path) -> Result<PathBuf> {
    let det_dir = out_dir.join(layout::DETECTIONS_DIR);
    fs::create_dir_all(&det_dir).map_err(|e| Error::io(&det_dir, e))?;
    for v in &ds.videos {
        let p = det_dir.join(format!("{}.jsonl", v.entry.video_id));
        save_detections(&p, &v.detections)?;
        crate::pose::save_video_meta(&meta_path_for(&p), &v.meta)?;
    }
    save_taxonomy(&out_dir.join(layout::TAXONOMY), &ds.taxonomy)?;
    for (split, name) in [
        (Split::Train, layout::TRAIN_MANIFEST),
        (Split::Test, layout::TEST_MANIFEST),
    ] {
        let entries: Vec<VideoManifestEntry> = ds
            .videos
            .iter()
            .filter(|v| v.split == split)
            .map(|v| v.entry.clone())
            .collect();
        save_manifest(&out_dir.join(name), &entries)?;
    }
    let spec_path = out_dir.join(layout::SPEC);
    let text = serde_json::to_string_pretty(&ds.spec).map_err(|e| Error::json(&spec_path, e))?;
    fs::write(&spec_path, text + "\n").map_err(|e| Error::io(&spec_path, e))?;
    Ok(det_dir)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SyntheticSpec {
        SyntheticSpec {
            classes: 3,
            videos_per_class: 4,
            test_per_class: 1,
            min_length: 5,
            max_length: 8,
            feature_dim: 6,
            seed: 11,
            ..SyntheticSpec::default()
        }
    }

    #[test]
    fn balanced_and_split() {
        let ds = generate(&small()).unwrap();
        assert_eq!(ds.videos.len(), 12);
        for c in 0..3 {
            let vids: Vec<_> = ds.videos.iter().filter(|v| v.label == c).collect();
            assert_eq!(vids.len(), 4);
            assert_eq!(vids.iter().filter(|v| v.split == Split::Test).count(), 1);
        }
        for v in &ds.videos {
            let n = v.detections.len();
            assert!((5..=8).contains(&n));
            assert_eq!(v.detections.feature_dim(), Some(6));
            assert_eq!(v.detections.joint_count(), Some(13));
        }
    }

    #[test]
    fn same_seed_same_data() {
        assert_eq!(generate(&small()).unwrap(), generate(&small()).unwrap());
        let other = SyntheticSpec {
            seed: 12,
            ..small()
        };
        assert_ne!(generate(&small()).unwrap(), generate(&other).unwrap());
    }

    #[test]
    fn signatures_distinct_and_validated() {
        let s = SyntheticSpec::default();
        let sig = s.signatures();
        assert_eq!(sig[2].velocity, 0.0);
        assert!(sig[0].velocity < 0.0 && sig[4].velocity > 0.0);
        let bad = SyntheticSpec {
            test_per_class: 40,
            ..s
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn writes_files() {
        let dir = tempfile::tempdir().unwrap();
        let ds = generate(&small()).unwrap();
        let det_dir = write_dataset(&ds, dir.path()).unwrap();
        assert_eq!(fs::read_dir(&det_dir).unwrap().count(), 24);
        let m = crate::pose::load_manifest(
            &dir.path().join(layout::TEST_MANIFEST),
            &dir.path().join(layout::TAXONOMY),
        )
        .unwrap();
        assert_eq!(m.len(), 3);
    }
}
