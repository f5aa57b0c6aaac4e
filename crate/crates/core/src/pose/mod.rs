//! Per-frame detections, skeleton layouts, and dataset manifests.

mod detection;
mod manifest;
mod skeleton;

pub use detection::{
    load_detections, load_detections_with, load_video_meta, meta_path_for, normalize_joints,
    denormalize_joints, save_detections, save_video_meta, BBox, Detection, DetectionSchema,
    Detections, NormalizedJoint, VideoMeta, REFERENCE_FEATURE_DIM,
};
pub use manifest::{
    load_manifest, load_taxonomy, save_manifest, save_taxonomy, ClassTaxonomy, Manifest,
    ObjectSize, VideoManifestEntry,
};
pub use skeleton::{Skeleton, SkeletonLayout};
