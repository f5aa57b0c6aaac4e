use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use super::config::{pick, require, FileConfig};
use super::{
    Cli, Command, EvalArgs, LinkArgs, MaskArgs, OptimArgs, PredictArgs, ReportArgs,
    SweepArgs, SynthArgs, TrainArgs,
};
use crate::classifiers::{
    normalized_adjacency, predict_videos, save_model, load_model, sweep_csv, t_sweep, train,
    HeadKind, JointInput, LabeledVideo, MiniStgcn, Model, ProbAveraging, SipNetHead, TrainConfig,
    TrainingTube,
};
use crate::error::{Error, Result};
use crate::eval::{
    evaluate, load_predictions, load_report, render_summary, render_table, save_predictions,
    save_report, EvalOptions, PredictionSet, Stratum,
};
use crate::linker::{
    link_tubes, load_tubes, make_mask_spec, save_mask_spec, save_tubes, tube_coverage,
    LinkerConfig, Tube,
};
use crate::pose::{
    load_detections, load_manifest, load_video_meta, meta_path_for, Detections, Manifest,
    Skeleton, SkeletonLayout,
};
use crate::synth::{generate, write_dataset, SyntheticSpec};
use crate::tensor::SgdConfig;

pub const TUBES_SUFFIX: &str = ".tubes.jsonl";
pub const DIR_RUN_MANIFEST: &str = "run_manifest.json";
const DEFAULT_T: usize = 32;
const DEFAULT_HIDDEN: usize = 64;
const DEFAULT_KT: usize = 9;

/// Written next to every output: what ran, with which settings.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: &'static str,
    pub version: &'static str,
    pub seed: Option<u64>,
    pub config: serde_json::Value,
}

/// `<out>.run.json` for a file output, `<out>/run_manifest.json` for a
/// directory.
pub fn run_manifest_path(out: &Path, is_dir: bool) -> PathBuf {
    if is_dir {
        out.join(DIR_RUN_MANIFEST)
    } else {
        let mut s = out.as_os_str().to_owned();
        s.push(".run.json");
        PathBuf::from(s)
    }
}

fn write_run_manifest(
    out: &Path,
    is_dir: bool,
    command: &'static str,
    seed: Option<u64>,
    config: serde_json::Value,
) -> Result<()> {
    let m = RunManifest {
        command,
        version: env!("CARGO_PKG_VERSION"),
        seed,
        config,
    };
    let path = run_manifest_path(out, is_dir);
    let text = serde_json::to_string_pretty(&m).map_err(|e| Error::json(&path, e))?;
    fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn ensure_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn require_dir(path: &Path) -> Result<()> {
    if path.is_dir() {
        Ok(())
    } else {
        Err(Error::Argument(format!("`{}` is not a directory", path.display())))
    }
}

fn require_file(path: &Path) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Error::Argument(format!("`{}` is not a file", path.display())))
    }
}

pub(super) fn dispatch(cli: Cli) -> Result<()> {
    let file = match &cli.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    let workers = cli.workers.or(file.workers);
    let pool = {
        let mut b = rayon::ThreadPoolBuilder::new();
        if let Some(n) = workers {
            if n == 0 {
                return Err(Error::Argument("--workers must be at least 1".into()));
            }
            b = b.num_threads(n);
        }
        b.build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?
    };
    pool.install(|| match cli.command {
        Command::Link(a) => cmd_link(&a, &file),
        Command::Mask(a) => cmd_mask(&a, &file),
        Command::Train(a) => cmd_train(&a, &file),
        Command::Predict(a) => cmd_predict(&a, &file),
        Command::Eval(a) => cmd_eval(&a, &file),
        Command::Sweep(a) => cmd_sweep(&a, &file),
        Command::Synth(a) => cmd_synth(&a, &file),
        Command::Report(a) => cmd_report(&a),
    })
}

/// Video ids of the `<id>.jsonl` files in a directory, sorted.
fn detection_ids(dir: &Path) -> Result<Vec<String>> {
    require_dir(dir)?;
    let mut ids = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().is_some_and(|e| e == "jsonl") && path.is_file() {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                ids.push(stem.to_string());
            }
        }
    }
    ids.sort();
    Ok(ids)
}

fn detections_path(dir: &Path, id: &str) -> PathBuf {
    dir.join(format!("{id}.jsonl"))
}

fn tubes_path(dir: &Path, id: &str) -> PathBuf {
    dir.join(format!("{id}{TUBES_SUFFIX}"))
}

fn linker_config(flag_iou: Option<f64>, flag_gap: Option<usize>, file: &FileConfig) -> LinkerConfig {
    let d = LinkerConfig::default();
    LinkerConfig {
        iou_threshold: pick(flag_iou, file.iou_threshold, d.iou_threshold),
        max_gap: pick(flag_gap, file.max_gap, d.max_gap),
    }
}

fn cmd_link(a: &LinkArgs, file: &FileConfig) -> Result<()> {
    let config = linker_config(a.iou_threshold, a.max_gap, file);
    config.validate()?;
    let ids = detection_ids(&a.detections)?;
    ensure_dir(&a.out)?;
    let linked: Vec<(String, Vec<Tube>)> = ids
        .par_iter()
        .map(|id| {
            let dets = load_detections(&detections_path(&a.detections, id))?;
            let tubes = link_tubes(&dets, &config)?;
            save_tubes(&tubes_path(&a.out, id), id, &tubes)?;
            Ok((id.clone(), tubes))
        })
        .collect::<Result<_>>()?;
    let by_video: BTreeMap<String, Vec<Tube>> = linked.into_iter().collect();
    let coverage = tube_coverage(&ids, &by_video);
    let cov_path = a.out.join("coverage.json");
    let text = serde_json::to_string_pretty(&coverage).map_err(|e| Error::json(&cov_path, e))?;
    write_text(&cov_path, &(text + "\n"))?;
    write_run_manifest(
        &a.out,
        true,
        "link",
        None,
        json!({ "detections": a.detections, "linker": config }),
    )?;
    println!(
        "linked {} videos, {} without tubes",
        coverage.videos, coverage.videos_without_tubes
    );
    Ok(())
}

fn load_tubes_or_empty(tubes_dir: &Path, id: &str, dets: &Detections) -> Result<Vec<Tube>> {
    let p = tubes_path(tubes_dir, id);
    if p.is_file() {
        Ok(load_tubes(&p, dets)?.1)
    } else {
        Ok(Vec::new())
    }
}

fn cmd_mask(a: &MaskArgs, file: &FileConfig) -> Result<()> {
    let mode = require(a.mode, file.mask_mode, "mode")?;
    require_dir(&a.tubes)?;
    let ids = detection_ids(&a.detections)?;
    ensure_dir(&a.out)?;
    ids.par_iter()
        .map(|id| {
            let dp = detections_path(&a.detections, id);
            let dets = load_detections(&dp)?;
            let meta = load_video_meta(&meta_path_for(&dp))?;
            let tubes = load_tubes_or_empty(&a.tubes, id, &dets)?;
            let spec = make_mask_spec(&tubes, mode, (meta.width, meta.height));
            save_mask_spec(&a.out.join(format!("{id}.mask.json")), &spec)
        })
        .collect::<Result<Vec<()>>>()?;
    write_run_manifest(
        &a.out,
        true,
        "mask",
        None,
        json!({ "detections": a.detections, "tubes": a.tubes, "mode": mode }),
    )
}

fn load_data_manifest(manifest: &Path, taxonomy: &Path) -> Result<Manifest> {
    require_file(manifest)?;
    require_file(taxonomy)?;
    load_manifest(manifest, taxonomy)
}

/// Tube sequences of every manifest video, as read by `model`. A video
/// without a tubes file has no tubes.
fn labeled_videos(model: &Model, manifest: &Manifest, data: (&Path, &Path)) -> Result<Vec<LabeledVideo>> {
    let (det_dir, tubes_dir) = data;
    require_dir(det_dir)?;
    require_dir(tubes_dir)?;
    let labels = manifest.labels();
    manifest
        .entries
        .par_iter()
        .zip(labels)
        .map(|(e, label)| {
            let dp = detections_path(det_dir, &e.video_id);
            let dets = load_detections(&dp)?;
            let mp = meta_path_for(&dp);
            let size = if mp.is_file() {
                let m = load_video_meta(&mp)?;
                Some((m.width as f64, m.height as f64))
            } else {
                None
            };
            let tubes = load_tubes_or_empty(tubes_dir, &e.video_id, &dets)?
                .iter()
                .map(|t| model.tube_sequence(t, size))
                .collect::<Result<Vec<_>>>()?;
            Ok(LabeledVideo {
                video_id: e.video_id.clone(),
                label,
                tubes,
            })
        })
        .collect()
}

fn train_config(optim: &OptimArgs, patience: Option<usize>, file: &FileConfig, seed: u64) -> TrainConfig {
    let d = TrainConfig::default();
    let s = SgdConfig::default();
    TrainConfig {
        epochs: pick(optim.epochs, file.epochs, d.epochs),
        batch_size: pick(optim.batch_size, file.batch_size, d.batch_size),
        sgd: SgdConfig {
            learning_rate: pick(optim.learning_rate, file.learning_rate, s.learning_rate),
            momentum: pick(optim.momentum, file.momentum, s.momentum),
            weight_decay: pick(optim.weight_decay, file.weight_decay, s.weight_decay),
            seed,
        },
        patience: patience.or(file.patience),
    }
}

/// Feature dimension of the first detection file that has features.
fn feature_dim(det_dir: &Path, manifest: &Manifest) -> Result<usize> {
    for e in &manifest.entries {
        let dets = load_detections(&detections_path(det_dir, &e.video_id))?;
        if let Some(d) = dets.feature_dim() {
            return Ok(d);
        }
    }
    Err(Error::Argument("no detection carries pose features".into()))
}

fn cmd_train(a: &TrainArgs, file: &FileConfig) -> Result<()> {
    let seed = require(a.optim.seed, file.seed, "seed")?;
    let manifest = load_data_manifest(&a.data.manifest, &a.data.taxonomy)?;
    let validation = a
        .validation_manifest
        .as_ref()
        .map(|p| load_data_manifest(p, &a.data.taxonomy))
        .transpose()?;
    let config = train_config(&a.optim, a.patience, file, seed);
    config.validate()?;
    let head = pick(a.head, file.head, HeadKind::Sipnet);
    let t = pick(a.t, file.t, DEFAULT_T);
    let classes = manifest.taxonomy.classes.clone();
    let c = classes.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = match head {
        HeadKind::Sipnet => {
            let d = feature_dim(&a.data.detections, &manifest)?;
            let mut h = SipNetHead::new(t, d, c, &mut rng)?;
            h.averaging = pick(a.averaging, file.averaging, ProbAveraging::default());
            Model::SipNet(h)
        }
        HeadKind::Ministgcn => {
            let layout = pick(a.skeleton, file.skeleton, SkeletonLayout::Lcr13);
            let skeleton = Skeleton::layout(layout);
            let net = MiniStgcn::new(
                normalized_adjacency(&skeleton),
                pick(a.hidden, file.hidden, DEFAULT_HIDDEN),
                pick(a.kt, file.kt, DEFAULT_KT),
                c,
                &mut rng,
            )?
            .with_clip_len(t)?;
            Model::MiniStgcn {
                net,
                skeleton,
                input: pick(a.joint_input, file.joint_input, JointInput::Xys2d),
            }
        }
    };
    let data = (a.data.detections.as_path(), a.data.tubes.as_path());
    let videos = labeled_videos(&model, &manifest, data)?;
    let held_out = validation
        .as_ref()
        .map(|m| labeled_videos(&model, m, data))
        .transpose()?;
    let tubes = TrainingTube::from_videos(&videos);
    let report = train(&mut model, &tubes, held_out.as_deref(), &config)?;
    if let Some(parent) = a.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        ensure_dir(parent)?;
    }
    save_model(&a.out, &model, &classes)?;
    let mut log_path = a.out.as_os_str().to_owned();
    log_path.push(".train.json");
    let log_path = PathBuf::from(log_path);
    let text = serde_json::to_string_pretty(&report).map_err(|e| Error::json(&log_path, e))?;
    write_text(&log_path, &(text + "\n"))?;
    write_run_manifest(
        &a.out,
        false,
        "train",
        Some(seed),
        json!({
            "manifest": a.data.manifest,
            "taxonomy": a.data.taxonomy,
            "detections": a.data.detections,
            "tubes": a.data.tubes,
            "validation_manifest": a.validation_manifest,
            "model": model.sidecar(&classes),
            "train": config,
        }),
    )?;
    println!(
        "trained {head:?} on {} tubes ({} skipped), final loss {:.6}",
        tubes.len() - report.skipped_tubes,
        report.skipped_tubes,
        report.epoch_losses.last().copied().unwrap_or(f64::NAN)
    );
    Ok(())
}

fn cmd_predict(a: &PredictArgs, file: &FileConfig) -> Result<()> {
    require_file(&a.model)?;
    let (mut model, classes) = load_model(&a.model)?;
    if let Model::SipNet(h) = &mut model {
        h.averaging = pick(a.averaging, file.averaging, h.averaging);
    }
    let manifest = load_data_manifest(&a.data.manifest, &a.data.taxonomy)?;
    if classes != manifest.taxonomy.classes {
        return Err(Error::Taxonomy(
            "model classes do not match the taxonomy".into(),
        ));
    }
    let data = (a.data.detections.as_path(), a.data.tubes.as_path());
    let videos = labeled_videos(&model, &manifest, data)?;
    let preds = predict_videos(&model, &videos)?;
    let mut set = PredictionSet::new(classes);
    for (v, p) in videos.iter().zip(preds) {
        set.insert(v.video_id.clone(), p)?;
    }
    save_predictions(&a.out, &set)?;
    write_run_manifest(
        &a.out,
        false,
        "predict",
        None,
        json!({
            "model": a.model,
            "manifest": a.data.manifest,
            "detections": a.data.detections,
            "tubes": a.data.tubes,
            "averaging": match &model { Model::SipNet(h) => Some(h.averaging), _ => None },
        }),
    )
}

fn cmd_eval(a: &EvalArgs, file: &FileConfig) -> Result<()> {
    let manifest = match (&a.manifest, &a.taxonomy) {
        (Some(m), Some(t)) => load_data_manifest(m, t)?,
        (None, None) => Manifest::reference_mimetics(),
        _ => {
            return Err(Error::Argument(
                "--manifest and --taxonomy go together".into(),
            ))
        }
    };
    require_file(&a.predictions)?;
    let preds = load_predictions(&a.predictions, manifest.taxonomy.classes.clone())?;
    let d = EvalOptions::default();
    let options = EvalOptions {
        no_tube_ap: pick(a.no_tube_ap, file.no_tube_ap, d.no_tube_ap),
        strata: pick(a.strata.clone(), file.strata.clone(), Stratum::ALL.to_vec()),
        superclasses: if a.no_superclasses {
            false
        } else {
            file.superclasses.unwrap_or(d.superclasses)
        },
        top_k: d.top_k,
    };
    let report = evaluate(&preds, &manifest, &options)?;
    save_report(&a.out, &report)?;
    let text = render_table(&[(a.name.as_str(), &report)])? + "\n" + &render_summary(&a.name, &report);
    match &a.table {
        Some(p) => write_text(p, &text)?,
        None => print!("{text}"),
    }
    write_run_manifest(
        &a.out,
        false,
        "eval",
        None,
        json!({
            "predictions": a.predictions,
            "manifest": a.manifest,
            "taxonomy": a.taxonomy,
            "options": options,
        }),
    )
}

fn cmd_sweep(a: &SweepArgs, file: &FileConfig) -> Result<()> {
    let seed = require(a.optim.seed, file.seed, "seed")?;
    let t_values = pick(a.t_values.clone(), file.t_values.clone(), vec![1, 8, 16, 32]);
    let config = train_config(&a.optim, None, file, seed);
    config.validate()?;
    let train_m = load_data_manifest(&a.train_manifest, &a.taxonomy)?;
    let test_m = load_data_manifest(&a.test_manifest, &a.taxonomy)?;
    let d = feature_dim(&a.detections, &train_m)?;
    let c = train_m.taxonomy.classes.len();
    let reader = Model::SipNet(SipNetHead::zeros(1, d, c)?);
    let data = (a.detections.as_path(), a.tubes.as_path());
    let train_v = labeled_videos(&reader, &train_m, data)?;
    let test_v = labeled_videos(&reader, &test_m, data)?;
    let points = t_sweep(&train_v, &test_v, d, c, &t_values, &config)?;
    write_text(&a.out, &sweep_csv(&points)?)?;
    write_run_manifest(
        &a.out,
        false,
        "sweep",
        Some(seed),
        json!({
            "train_manifest": a.train_manifest,
            "test_manifest": a.test_manifest,
            "taxonomy": a.taxonomy,
            "t_values": t_values,
            "train": config,
        }),
    )?;
    for p in &points {
        println!("T={:<3} mean accuracy {:.3}", p.t, p.mean_accuracy);
    }
    Ok(())
}

fn cmd_synth(a: &SynthArgs, file: &FileConfig) -> Result<()> {
    let base = file.synth.clone().unwrap_or_default();
    let file_seed = file.synth.as_ref().map(|s| s.seed).or(file.seed);
    let spec = SyntheticSpec {
        seed: require(a.seed, file_seed, "seed")?,
        classes: a.classes.unwrap_or(base.classes),
        videos_per_class: a.videos_per_class.unwrap_or(base.videos_per_class),
        test_per_class: a.test_per_class.unwrap_or(base.test_per_class),
        feature_dim: a.feature_dim.unwrap_or(base.feature_dim),
        noise: a.noise.unwrap_or(base.noise),
        min_length: a.min_length.unwrap_or(base.min_length),
        max_length: a.max_length.unwrap_or(base.max_length),
        ..base
    };
    let ds = generate(&spec)?;
    ensure_dir(&a.out)?;
    write_dataset(&ds, &a.out)?;
    write_run_manifest(&a.out, true, "synth", Some(spec.seed), json!({ "synth": spec }))?;
    println!("wrote {} videos to {}", ds.videos.len(), a.out.display());
    Ok(())
}

fn cmd_report(a: &ReportArgs) -> Result<()> {
    let reports = a
        .reports
        .iter()
        .map(|(name, p)| Ok((name.as_str(), load_report(p)?)))
        .collect::<Result<Vec<_>>>()?;
    let refs: Vec<(&str, &crate::eval::EvalReport)> =
        reports.iter().map(|(n, r)| (*n, r)).collect();
    let mut text = render_table(&refs)?;
    for (n, r) in &refs {
        text.push('\n');
        text.push_str(&render_summary(n, r));
    }
    match &a.out {
        Some(p) => write_text(p, &text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}
