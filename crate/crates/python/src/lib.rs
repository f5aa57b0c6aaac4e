//! Python bindings: tensor kernels, tube linking, SIP-Net inference,
//! evaluation metrics, the reference manifest and the command line.

use std::path::PathBuf;

use pyo3::exceptions::{PyArithmeticError, PyIndexError, PyOSError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use mimebench::classifiers::{
    load_model, save_model, sipnet_video_probs, Model, ProbAveraging, SipNetHead,
};
use mimebench::eval::{self, NoTubeAp, Prediction};
use mimebench::linker::{self, LinkerConfig};
use mimebench::pose::{load_detections, BBox, Manifest};
use mimebench::synth::{generate, write_dataset, SyntheticSpec};
use mimebench::tensor::{self, Tensor};
use mimebench::Error;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::NonFinite(_) | Error::TrainingDiverged(_) => PyArithmeticError::new_err(e.to_string()),
        Error::Index { .. } => PyIndexError::new_err(e.to_string()),
        Error::Io { .. } => PyOSError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn matrix(rows: Vec<Vec<f64>>) -> PyResult<Tensor> {
    Tensor::from_rows(&rows).map_err(py_err)
}

fn rows(t: &Tensor) -> Vec<Vec<f64>> {
    let c = *t.shape().last().unwrap_or(&1);
    t.data().chunks(c.max(1)).map(<[f64]>::to_vec).collect()
}

fn prediction(p: Option<Vec<f64>>) -> Prediction {
    p.map_or(Prediction::NoTube, Prediction::Scores)
}

fn averaging(name: &str) -> PyResult<ProbAveraging> {
    serde_json::from_value(serde_json::Value::String(name.into()))
        .map_err(|_| PyValueError::new_err(format!("unknown averaging `{name}`")))
}

/// Numerically stable softmax of a logit vector.
#[pyfunction]
fn softmax(logits: Vec<f64>) -> PyResult<Vec<f64>> {
    Ok(tensor::softmax(&Tensor::vector(logits).map_err(py_err)?).into_data())
}

/// Valid temporal convolution of an `L×D` input with a `T×D×C` kernel.
#[pyfunction]
fn conv1d_temporal(
    input: Vec<Vec<f64>>,
    kernel: Vec<Vec<Vec<f64>>>,
    bias: Vec<f64>,
) -> PyResult<Vec<Vec<f64>>> {
    let (t, d) = (kernel.len(), kernel.first().map_or(0, Vec::len));
    let c = bias.len();
    let flat: Vec<f64> = kernel.into_iter().flatten().flatten().collect();
    let k = Tensor::new(vec![t, d, c], flat).map_err(py_err)?;
    let out = tensor::conv1d_temporal(&matrix(input)?, &k, &Tensor::vector(bias).map_err(py_err)?)
        .map_err(py_err)?;
    Ok(rows(&out))
}

#[pyfunction]
fn iou(a: [f64; 4], b: [f64; 4]) -> PyResult<f64> {
    linker::iou(&BBox::from(a), &BBox::from(b)).map_err(py_err)
}

/// Links a `<video>.jsonl` detection file. Each tube is a dict with
/// `frames`, `interpolated`, `boxes` and `tube_score`.
#[pyfunction]
#[pyo3(signature = (path, iou_threshold = 0.3, max_gap = 10))]
fn link_detections<'py>(
    py: Python<'py>,
    path: PathBuf,
    iou_threshold: f64,
    max_gap: usize,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let dets = load_detections(&path).map_err(py_err)?;
    let cfg = LinkerConfig {
        iou_threshold,
        max_gap,
    };
    let tubes = linker::link_tubes(&dets, &cfg).map_err(py_err)?;
    tubes
        .iter()
        .map(|t| {
            let d = PyDict::new(py);
            d.set_item("frames", t.frames())?;
            d.set_item(
                "interpolated",
                t.entries.iter().map(|e| e.interpolated).collect::<Vec<_>>(),
            )?;
            d.set_item(
                "boxes",
                t.entries
                    .iter()
                    .map(|e| <[f64; 4]>::from(e.detection.bbox))
                    .collect::<Vec<_>>(),
            )?;
            d.set_item("tube_score", t.tube_score)?;
            Ok(d)
        })
        .collect()
}

/// Whether `label` is among the `k` best classes; `None` means no tube.
#[pyfunction]
fn topk_hit(probs: Option<Vec<f64>>, label: usize, k: usize) -> PyResult<bool> {
    eval::topk_hit(&prediction(probs), label, k).map_err(py_err)
}

#[pyfunction]
#[pyo3(signature = (preds, labels, classes, k = 1))]
fn mean_class_accuracy(
    preds: Vec<Option<Vec<f64>>>,
    labels: Vec<usize>,
    classes: usize,
    k: usize,
) -> PyResult<Option<f64>> {
    let preds: Vec<Prediction> = preds.into_iter().map(prediction).collect();
    Ok(eval::mean_class_topk(&preds, &labels, classes, k)
        .map_err(py_err)?
        .mean)
}

/// Mean over classes of the mean inverse rank of the true label.
#[pyfunction]
#[pyo3(signature = (preds, labels, classes, exclude_no_tube = false))]
fn mean_average_precision(
    preds: Vec<Option<Vec<f64>>>,
    labels: Vec<usize>,
    classes: usize,
    exclude_no_tube: bool,
) -> PyResult<Option<f64>> {
    let preds: Vec<Prediction> = preds.into_iter().map(prediction).collect();
    let policy = if exclude_no_tube {
        NoTubeAp::Exclude
    } else {
        NoTubeAp::Zero
    };
    Ok(eval::mean_average_precision(&preds, &labels, classes, policy)
        .map_err(py_err)?
        .mean)
}

#[pyfunction]
fn superclass_remap(probs: Vec<f64>, index: Vec<usize>, groups: usize) -> PyResult<Vec<f64>> {
    eval::superclass_remap(&probs, &index, groups).map_err(py_err)
}

/// Video count, per-class counts and superclass count of the bundled
/// reference manifest.
#[pyfunction]
fn reference_manifest(py: Python<'_>) -> PyResult<Bound<'_, PyDict>> {
    let m = Manifest::reference_mimetics();
    let d = PyDict::new(py);
    d.set_item("videos", m.len())?;
    d.set_item("class_counts", m.class_counts())?;
    d.set_item("superclasses", m.taxonomy.superclass_names().len())?;
    Ok(d)
}

/// Writes the default synthetic dataset; returns the number of videos.
#[pyfunction]
fn generate_synthetic(out: PathBuf, seed: u64) -> PyResult<usize> {
    let spec = SyntheticSpec {
        seed,
        ..SyntheticSpec::default()
    };
    let ds = generate(&spec).map_err(py_err)?;
    std::fs::create_dir_all(&out).map_err(|e| PyOSError::new_err(e.to_string()))?;
    write_dataset(&ds, &out).map_err(py_err)?;
    Ok(ds.videos.len())
}

/// Runs a command line, e.g. `["link", "--detections", d, "--out", o]`.
/// Returns the exit code.
#[pyfunction]
fn run_cli(args: Vec<String>) -> i32 {
    mimebench::cli::main_with_args(std::iter::once("mimebench".to_string()).chain(args))
}

/// Single temporal convolution over stacked per-frame pose features.
#[pyclass(name = "SipNet")]
struct PySipNet {
    head: SipNetHead,
    classes: Vec<String>,
}

#[pymethods]
impl PySipNet {
    #[new]
    #[pyo3(signature = (t, d, c, seed = 0))]
    fn new(t: usize, d: usize, c: usize, seed: u64) -> PyResult<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(PySipNet {
            head: SipNetHead::new(t, d, c, &mut rng).map_err(py_err)?,
            classes: (0..c).map(|i| format!("class_{i}")).collect(),
        })
    }

    /// Loads a checkpoint written by `train --head sipnet`.
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        match load_model(&path).map_err(py_err)? {
            (Model::SipNet(head), classes) => Ok(PySipNet { head, classes }),
            _ => Err(PyValueError::new_err("checkpoint is not a SIP-Net head")),
        }
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        save_model(&path, &Model::SipNet(self.head.clone()), &self.classes).map_err(py_err)
    }

    #[getter]
    fn t(&self) -> usize {
        self.head.t
    }

    #[getter]
    fn d(&self) -> usize {
        self.head.d
    }

    #[getter]
    fn classes(&self) -> Vec<String> {
        self.classes.clone()
    }

    #[getter]
    fn parameter_count(&self) -> usize {
        self.head.parameter_count()
    }

    /// Per-window logits of an `L×D` feature matrix.
    fn scores(&self, features: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        Ok(rows(&self.head.scores(&matrix(features)?).map_err(py_err)?))
    }

    /// Class probabilities of one tube.
    #[pyo3(signature = (features, averaging = "softmax_then_mean"))]
    fn probs(&self, features: Vec<Vec<f64>>, averaging: &str) -> PyResult<Vec<f64>> {
        let logits = self.head.scores(&matrix(features)?).map_err(py_err)?;
        sipnet_video_probs(&logits, self::averaging(averaging)?).map_err(py_err)
    }

    fn __repr__(&self) -> String {
        format!("SipNet(t={}, d={}, c={})", self.head.t, self.head.d, self.head.c)
    }
}

#[pymodule]
#[pyo3(name = "mimebench")]
fn mimebench_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<PySipNet>()?;
    m.add_function(wrap_pyfunction!(softmax, m)?)?;
    m.add_function(wrap_pyfunction!(conv1d_temporal, m)?)?;
    m.add_function(wrap_pyfunction!(iou, m)?)?;
    m.add_function(wrap_pyfunction!(link_detections, m)?)?;
    m.add_function(wrap_pyfunction!(topk_hit, m)?)?;
    m.add_function(wrap_pyfunction!(mean_class_accuracy, m)?)?;
    m.add_function(wrap_pyfunction!(mean_average_precision, m)?)?;
    m.add_function(wrap_pyfunction!(superclass_remap, m)?)?;
    m.add_function(wrap_pyfunction!(reference_manifest, m)?)?;
    m.add_function(wrap_pyfunction!(generate_synthetic, m)?)?;
    m.add_function(wrap_pyfunction!(run_cli, m)?)?;
    Ok(())
}
