use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::classifiers::{HeadKind, JointInput, ProbAveraging};
use crate::error::{Error, Result};
use crate::eval::{NoTubeAp, Stratum};
use crate::linker::MaskMode;
use crate::pose::SkeletonLayout;
use crate::synth::SyntheticSpec;

/// Option values read from `--config`. Every field is optional; a flag given
/// on the command line wins over the file, and the file over the default.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub workers: Option<usize>,

    pub iou_threshold: Option<f64>,
    pub max_gap: Option<usize>,
    pub mask_mode: Option<MaskMode>,

    pub head: Option<HeadKind>,
    #[serde(rename = "T")]
    pub t: Option<usize>,
    pub t_values: Option<Vec<usize>>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub learning_rate: Option<f64>,
    pub momentum: Option<f64>,
    pub weight_decay: Option<f64>,
    pub patience: Option<usize>,
    pub hidden: Option<usize>,
    pub kt: Option<usize>,
    pub joint_input: Option<JointInput>,
    pub skeleton: Option<SkeletonLayout>,
    pub averaging: Option<ProbAveraging>,

    pub no_tube_ap: Option<NoTubeAp>,
    pub strata: Option<Vec<Stratum>>,
    pub superclasses: Option<bool>,

    pub synth: Option<SyntheticSpec>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(path, e))
    }
}

/// Flag, else file value, else default.
pub fn pick<T>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}

/// Flag, else file value; an error naming `what` when both are absent.
pub fn require<T>(flag: Option<T>, file: Option<T>, what: &str) -> Result<T> {
    flag.or(file)
        .ok_or_else(|| Error::Argument(format!("`{what}` is required")))
}
