use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ModelParams, Tensor};
use crate::error::{Error, Result};

/// Header value identifying the parameter checkpoint layout.
pub const CHECKPOINT_FORMAT: &str = "mimebench-params-v1";

#[derive(Serialize, Deserialize)]
struct NamedTensor {
    name: String,
    shape: Vec<usize>,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    tensors: Vec<NamedTensor>,
}

pub fn save_params(params: &ModelParams, path: &Path) -> Result<()> {
    let ckpt = Checkpoint {
        format: CHECKPOINT_FORMAT.to_string(),
        tensors: params
            .iter()
            .map(|(name, t)| NamedTensor {
                name: name.to_string(),
                shape: t.shape().to_vec(),
                data: t.data().to_vec(),
            })
            .collect(),
    };
    let text = serde_json::to_string(&ckpt).map_err(|e| Error::json(path, e))?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub fn load_params(path: &Path) -> Result<ModelParams> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let ckpt: Checkpoint = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
    if ckpt.format != CHECKPOINT_FORMAT {
        return Err(Error::Schema {
            path: path.into(),
            msg: format!("unsupported checkpoint format `{}`", ckpt.format),
        });
    }
    let mut params = ModelParams::new();
    for nt in ckpt.tensors {
        let t = Tensor::new(nt.shape, nt.data).map_err(|e| Error::Schema {
            path: path.into(),
            msg: format!("tensor `{}`: {e}", nt.name),
        })?;
        params.insert(nt.name, t);
    }
    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.json");
        let mut params = ModelParams::new();
        params.insert(
            "kernel",
            Tensor::from_fn(&[2, 3, 2], |i| (i as f64 * 0.7311).sin() / 3.0),
        );
        params.insert("bias", Tensor::vector(vec![1e-300, -2.5]).unwrap());
        save_params(&params, &path).unwrap();
        assert_eq!(load_params(&path).unwrap(), params);
    }

    #[test]
    fn wrong_header_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.json");
        fs::write(&path, r#"{"format":"other","tensors":[]}"#).unwrap();
        assert!(matches!(load_params(&path), Err(Error::Schema { .. })));
    }
}
