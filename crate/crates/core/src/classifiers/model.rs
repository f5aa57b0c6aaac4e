use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{
    joint_sequence, normalized_adjacency, Classifier, JointInput, MiniStgcn, ProbAveraging,
    SipNetHead,
};
use crate::error::{Error, Result};
use crate::linker::Tube;
use crate::pose::Skeleton;
use crate::tensor::{load_params, save_params, ModelParams, Tape, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadKind {
    Sipnet,
    Ministgcn,
}

/// Description stored next to a parameter checkpoint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSidecar {
    pub head: HeadKind,
    #[serde(rename = "T")]
    pub t: usize,
    #[serde(rename = "D", default, skip_serializing_if = "Option::is_none")]
    pub d: Option<usize>,
    #[serde(rename = "C")]
    pub c: usize,
    pub classes: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skeleton: Option<Skeleton>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub joint_input: Option<JointInput>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hidden: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kt: Option<usize>,
    #[serde(default)]
    pub averaging: ProbAveraging,
}

/// A trained head of either kind together with what it needs to read tubes.
#[derive(Clone, Debug, PartialEq)]
pub enum Model {
    SipNet(SipNetHead),
    MiniStgcn {
        net: MiniStgcn,
        skeleton: Skeleton,
        input: JointInput,
    },
}

impl Model {
    pub fn kind(&self) -> HeadKind {
        match self {
            Model::SipNet(_) => HeadKind::Sipnet,
            Model::MiniStgcn { .. } => HeadKind::Ministgcn,
        }
    }

    fn inner(&self) -> &dyn Classifier {
        match self {
            Model::SipNet(h) => h,
            Model::MiniStgcn { net, .. } => net,
        }
    }

    fn inner_mut(&mut self) -> &mut dyn Classifier {
        match self {
            Model::SipNet(h) => h,
            Model::MiniStgcn { net, .. } => net,
        }
    }

    /// The input sequence this head reads from a tube: stacked features for
    /// SIP-Net, joint coordinates for the graph model.
    pub fn tube_sequence(&self, tube: &Tube, image_size: Option<(f64, f64)>) -> Result<Tensor> {
        match self {
            Model::SipNet(h) => {
                let rows = tube.feature_matrix().ok_or_else(|| {
                    Error::Argument("tube has frames without pose features".into())
                })?;
                if rows.iter().any(|r| r.len() != h.d) {
                    return Err(Error::dim(
                        "tube_sequence",
                        format!("features must have dimension {}", h.d),
                    ));
                }
                Tensor::new(vec![rows.len(), h.d], rows.concat())
            }
            Model::MiniStgcn {
                skeleton, input, ..
            } => {
                let size = match input {
                    JointInput::Xys2d => image_size.ok_or_else(|| {
                        Error::Argument("2D joint input needs the image size".into())
                    })?,
                    JointInput::Xyz3d => image_size.unwrap_or((1.0, 1.0)),
                };
                joint_sequence(tube, *input, size, skeleton)
            }
        }
    }

    pub fn sidecar(&self, classes: &[String]) -> ModelSidecar {
        match self {
            Model::SipNet(h) => ModelSidecar {
                head: HeadKind::Sipnet,
                t: h.t,
                d: Some(h.d),
                c: h.c,
                classes: classes.to_vec(),
                skeleton: None,
                joint_input: None,
                hidden: None,
                kt: None,
                averaging: h.averaging,
            },
            Model::MiniStgcn {
                net,
                skeleton,
                input,
            } => ModelSidecar {
                head: HeadKind::Ministgcn,
                t: net.clip_len,
                d: None,
                c: net.classes,
                classes: classes.to_vec(),
                skeleton: Some(skeleton.clone()),
                joint_input: Some(*input),
                hidden: Some(net.hidden),
                kt: Some(net.kt),
                averaging: ProbAveraging::default(),
            },
        }
    }

    pub fn from_parts(sidecar: &ModelSidecar, params: ModelParams) -> Result<Self> {
        if sidecar.classes.len() != sidecar.c {
            return Err(Error::Config(format!(
                "sidecar lists {} classes but C = {}",
                sidecar.classes.len(),
                sidecar.c
            )));
        }
        let missing = |f: &str| Error::Config(format!("sidecar lacks `{f}`"));
        match sidecar.head {
            HeadKind::Sipnet => {
                let d = sidecar.d.ok_or_else(|| missing("D"))?;
                let mut h = SipNetHead::from_params(sidecar.t, d, sidecar.c, params)?;
                h.averaging = sidecar.averaging;
                Ok(Model::SipNet(h))
            }
            HeadKind::Ministgcn => {
                let skeleton = sidecar.skeleton.clone().ok_or_else(|| missing("skeleton"))?;
                skeleton.validate()?;
                let net = MiniStgcn::from_params(
                    normalized_adjacency(&skeleton),
                    sidecar.hidden.ok_or_else(|| missing("hidden"))?,
                    sidecar.kt.ok_or_else(|| missing("kt"))?,
                    sidecar.c,
                    params,
                )?
                .with_clip_len(sidecar.t)?;
                Ok(Model::MiniStgcn {
                    net,
                    skeleton,
                    input: sidecar.joint_input.ok_or_else(|| missing("joint_input"))?,
                })
            }
        }
    }
}

impl Classifier for Model {
    fn params(&self) -> &ModelParams {
        self.inner().params()
    }
    fn params_mut(&mut self) -> &mut ModelParams {
        self.inner_mut().params_mut()
    }
    fn classes(&self) -> usize {
        self.inner().classes()
    }
    fn clip_len(&self) -> usize {
        self.inner().clip_len()
    }
    fn batch_loss(
        &self,
        tape: &mut Tape,
        vars: &[Var],
        clips: &[Tensor],
        labels: &[usize],
    ) -> Result<Var> {
        self.inner().batch_loss(tape, vars, clips, labels)
    }
    fn sequence_probs(&self, seq: &Tensor) -> Result<Vec<f64>> {
        self.inner().sequence_probs(seq)
    }
}

/// `<checkpoint>.sidecar.json`.
pub fn sidecar_path_for(checkpoint: &Path) -> PathBuf {
    let mut s = checkpoint.as_os_str().to_owned();
    s.push(".sidecar.json");
    PathBuf::from(s)
}

pub fn save_model(path: &Path, model: &Model, classes: &[String]) -> Result<()> {
    save_params(model.params(), path)?;
    let side = sidecar_path_for(path);
    let text = serde_json::to_string_pretty(&model.sidecar(classes))
        .map_err(|e| Error::json(&side, e))?;
    fs::write(&side, text + "\n").map_err(|e| Error::io(&side, e))
}

/// Loads a checkpoint and its sidecar; returns the model and its class list.
pub fn load_model(path: &Path) -> Result<(Model, Vec<String>)> {
    let side = sidecar_path_for(path);
    let text = fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
    let sidecar: ModelSidecar = serde_json::from_str(&text).map_err(|e| Error::json(&side, e))?;
    let model = Model::from_parts(&sidecar, load_params(path)?)?;
    Ok((model, sidecar.classes))
}
