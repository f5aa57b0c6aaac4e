//! A small spatio-temporal graph convolution classifier over joint
//! coordinates: one spatial graph layer with the symmetric-normalized
//! single-partition adjacency, one valid temporal convolution shared across
//! joints, global average pooling, and a linear classifier.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::init_uniform;
use super::sipnet::stack;
use crate::error::{Error, Result};
use crate::pose::{normalize_joints, Skeleton};
use crate::linker::Tube;
use crate::tensor::{self, ModelParams, Tape, Tensor, Var};

pub const IN_CHANNELS: usize = 3;
pub const W_SPATIAL: &str = "w_spatial";
pub const T_KERNEL: &str = "t_kernel";
pub const T_BIAS: &str = "t_bias";
pub const W_CLS: &str = "w_cls";
pub const B_CLS: &str = "b_cls";

/// Which per-joint coordinates feed the network.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JointInput {
    /// Image-normalized `(x, y, s)`.
    Xys2d,
    /// Root-relative `(X, Y, Z)`.
    Xyz3d,
}

/// `D̃^{-1/2} (A + I) D̃^{-1/2}` of a skeleton graph.
pub fn normalized_adjacency(skeleton: &Skeleton) -> Tensor {
    let j = skeleton.joint_count();
    let a = skeleton.adjacency_with_self_loops();
    let deg: Vec<f64> = (0..j).map(|r| a[r * j..(r + 1) * j].iter().sum()).collect();
    Tensor::from_fn(&[j, j], |i| {
        let (r, c) = (i / j, i % j);
        a[i] / (deg[r].sqrt() * deg[c].sqrt())
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct MiniStgcn {
    pub adjacency: Arc<Tensor>,
    pub hidden: usize,
    pub kt: usize,
    pub classes: usize,
    /// Window length used when sampling training clips.
    pub clip_len: usize,
    pub params: ModelParams,
}

impl MiniStgcn {
    pub fn new<R: Rng + ?Sized>(
        adjacency: Tensor,
        hidden: usize,
        kt: usize,
        classes: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let mut m = MiniStgcn::zeros(adjacency, hidden, kt, classes)?;
        m.params
            .insert(W_SPATIAL, init_uniform(&[IN_CHANNELS, hidden], IN_CHANNELS, rng));
        m.params
            .insert(T_KERNEL, init_uniform(&[kt, hidden, hidden], kt * hidden, rng));
        m.params
            .insert(W_CLS, init_uniform(&[hidden, classes], hidden, rng));
        Ok(m)
    }

    pub fn zeros(adjacency: Tensor, hidden: usize, kt: usize, classes: usize) -> Result<Self> {
        match adjacency.shape() {
            [a, b] if a == b && *a > 0 => {}
            s => return Err(Error::dim("ministgcn", format!("adjacency shape {s:?}"))),
        }
        if hidden == 0 || kt == 0 || classes == 0 {
            return Err(Error::Config(format!(
                "graph model sizes must be positive (hidden={hidden}, K_t={kt}, C={classes})"
            )));
        }
        let mut params = ModelParams::new();
        params.insert(W_SPATIAL, Tensor::zeros(&[IN_CHANNELS, hidden]));
        params.insert(T_KERNEL, Tensor::zeros(&[kt, hidden, hidden]));
        params.insert(T_BIAS, Tensor::zeros(&[hidden]));
        params.insert(W_CLS, Tensor::zeros(&[hidden, classes]));
        params.insert(B_CLS, Tensor::zeros(&[classes]));
        Ok(MiniStgcn {
            adjacency: Arc::new(adjacency),
            hidden,
            kt,
            classes,
            clip_len: kt,
            params,
        })
    }

    pub fn from_params(
        adjacency: Tensor,
        hidden: usize,
        kt: usize,
        classes: usize,
        params: ModelParams,
    ) -> Result<Self> {
        let mut m = MiniStgcn::zeros(adjacency, hidden, kt, classes)?;
        for (name, t) in m.params.iter_mut() {
            let src = params.require(name)?;
            if src.shape() != t.shape() {
                return Err(Error::Config(format!(
                    "parameter `{name}` has shape {:?}, expected {:?}",
                    src.shape(),
                    t.shape()
                )));
            }
            *t = src.clone();
        }
        Ok(m)
    }

    pub fn with_clip_len(mut self, clip_len: usize) -> Result<Self> {
        if clip_len < self.kt {
            return Err(Error::Config(format!(
                "clip length {clip_len} is shorter than the temporal kernel {}",
                self.kt
            )));
        }
        self.clip_len = clip_len;
        Ok(self)
    }

    pub fn joints(&self) -> usize {
        self.adjacency.shape()[0]
    }

    /// Records the forward pass for a batch `[B, T, J, 3]` and returns
    /// logits `[B, C]`. `vars` are the parameters in declaration order.
    pub fn forward(&self, tape: &mut Tape, vars: &[Var], x: Var) -> Result<Var> {
        let [b, t, j, cin] = *tape.value(x).shape() else {
            return Err(Error::dim(
                "stgcn_block",
                format!("expected B×T×J×3, got {:?}", tape.value(x).shape()),
            ));
        };
        if j != self.joints() || cin != IN_CHANNELS {
            return Err(Error::dim(
                "stgcn_block",
                format!("expected J={} and 3 channels, got J={j}, {cin}", self.joints()),
            ));
        }
        if t < self.kt {
            return Err(Error::SequenceTooShort {
                len: t,
                required: self.kt,
            });
        }
        let h = self.hidden;
        let [w_s, t_k, t_b, w_c, b_c] = vars else {
            return Err(Error::Config("graph model expects 5 parameters".into()));
        };
        let mixed = tape.graph_mix(Arc::clone(&self.adjacency), x)?;
        let flat = tape.reshape(mixed, &[b * t * j, cin])?;
        let spatial = tape.matmul(flat, *w_s)?;
        let spatial = tape.relu(spatial);
        let spatial = tape.reshape(spatial, &[b, t, j, h])?;
        let per_joint = tape.transpose12(spatial)?;
        let per_joint = tape.reshape(per_joint, &[b * j, t, h])?;
        let temporal = tape.conv1d_temporal(per_joint, *t_k, *t_b)?;
        let temporal = tape.relu(temporal);
        let t_out = t - self.kt + 1;
        let pooled_in = tape.reshape(temporal, &[b, j * t_out, h])?;
        let pooled = tape.mean_middle(pooled_in)?;
        let logits = tape.matmul(pooled, *w_c)?;
        tape.add_bias(logits, *b_c)
    }

    /// Logits `[C]` for one sequence `[T, J, 3]`.
    pub fn logits(&self, seq: &Tensor) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = self
            .params
            .iter()
            .map(|(_, p)| tape.constant(p.clone()))
            .collect();
        let mut shape = vec![1];
        shape.extend_from_slice(seq.shape());
        let x = tape.constant(seq.clone().reshape(shape)?);
        let out = self.forward(&mut tape, &vars, x)?;
        Ok(tape.value(out).data().to_vec())
    }

    pub fn batch_loss(
        &self,
        tape: &mut Tape,
        vars: &[Var],
        clips: &[Tensor],
        labels: &[usize],
    ) -> Result<Var> {
        let x = tape.constant(stack(clips)?);
        let logits = self.forward(tape, vars, x)?;
        tape.cross_entropy(logits, labels)
    }
}

/// Logits of one `[T, J, 3]` sequence.
pub fn stgcn_block(input: &Tensor, model: &MiniStgcn) -> Result<Tensor> {
    Tensor::vector(model.logits(input)?)
}

/// Builds the `[L, J, 3]` coordinate sequence of a tube.
pub fn joint_sequence(
    tube: &Tube,
    kind: JointInput,
    image_size: (f64, f64),
    skeleton: &Skeleton,
) -> Result<Tensor> {
    let j = skeleton.joint_count();
    let mut data = Vec::with_capacity(tube.len() * j * IN_CHANNELS);
    for e in &tube.entries {
        let d = &e.detection;
        if d.joint_count() != j {
            return Err(Error::dim(
                "joint_sequence",
                format!("detection has {} joints, skeleton {j}", d.joint_count()),
            ));
        }
        match kind {
            JointInput::Xys2d => {
                for nj in normalize_joints(d, image_size)? {
                    data.extend_from_slice(&[nj.x, nj.y, nj.s]);
                }
            }
            JointInput::Xyz3d => {
                let j3 = d.joints3d.as_ref().ok_or_else(|| {
                    Error::Argument(format!("frame {} has no 3D joints", d.frame_index))
                })?;
                let mut root = [0.0; 3];
                for &r in &skeleton.root {
                    for (a, v) in root.iter_mut().zip(j3[r]) {
                        *a += v / skeleton.root.len() as f64;
                    }
                }
                for p in j3 {
                    data.extend_from_slice(&[p[0] - root[0], p[1] - root[1], p[2] - root[2]]);
                }
            }
        }
    }
    Tensor::new(vec![tube.len(), j, IN_CHANNELS], data)
}

/// Class probabilities of one sequence.
pub fn stgcn_probs(model: &MiniStgcn, seq: &Tensor) -> Result<Vec<f64>> {
    Ok(tensor::softmax(&Tensor::vector(model.logits(seq)?)?).into_data())
}
