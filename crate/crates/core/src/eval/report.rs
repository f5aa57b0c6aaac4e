use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::metrics::{
    confusion_matrix, global_topk, mean_average_precision, mean_class_topk, remap_to_superclasses,
    Confusion, NoTubeAp,
};
use super::PredictionSet;
use crate::error::{Error, Result};
use crate::linker::VideoScores;
use crate::pose::{Manifest, ObjectSize, VideoManifestEntry};

/// Video subsets for stratified global accuracy.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stratum {
    All,
    MimeArtist,
    NotMimeArtist,
    ObjectIrrelevant,
    SceneIrrelevant,
    ObjectAndSceneIrrelevant,
    SmallOrNoObject,
    LargeObject,
}

impl Stratum {
    pub const ALL: [Stratum; 8] = [
        Stratum::All,
        Stratum::MimeArtist,
        Stratum::NotMimeArtist,
        Stratum::ObjectIrrelevant,
        Stratum::SceneIrrelevant,
        Stratum::ObjectAndSceneIrrelevant,
        Stratum::SmallOrNoObject,
        Stratum::LargeObject,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stratum::All => "all",
            Stratum::MimeArtist => "mime_artist",
            Stratum::NotMimeArtist => "not_mime_artist",
            Stratum::ObjectIrrelevant => "object_irrelevant",
            Stratum::SceneIrrelevant => "scene_irrelevant",
            Stratum::ObjectAndSceneIrrelevant => "object_and_scene_irrelevant",
            Stratum::SmallOrNoObject => "small_or_no_object",
            Stratum::LargeObject => "large_object",
        }
    }

    pub fn contains(self, entry: &VideoManifestEntry, manifest: &Manifest) -> bool {
        let size = || manifest.taxonomy.object_size_of(&entry.label);
        match self {
            Stratum::All => true,
            Stratum::MimeArtist => entry.is_mime_artist,
            Stratum::NotMimeArtist => !entry.is_mime_artist,
            Stratum::ObjectIrrelevant => !entry.object_relevant,
            Stratum::SceneIrrelevant => !entry.scene_relevant,
            Stratum::ObjectAndSceneIrrelevant => !entry.object_relevant && !entry.scene_relevant,
            Stratum::SmallOrNoObject => size() == Some(ObjectSize::NoneOrSmall),
            Stratum::LargeObject => size() == Some(ObjectSize::Large),
        }
    }
}

impl std::str::FromStr for Stratum {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Stratum::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::Argument(format!("unknown stratum `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StratumResult {
    pub stratum: Stratum,
    pub videos: usize,
    /// `None` for an empty stratum.
    pub global_top1: Option<f64>,
}

/// Global top-1 accuracy on each requested subset of the manifest.
pub fn stratified_report(
    preds: &PredictionSet,
    manifest: &Manifest,
    strata: &[Stratum],
) -> Result<Vec<StratumResult>> {
    let labels = manifest.labels();
    strata
        .iter()
        .map(|&st| {
            let mut p = Vec::new();
            let mut l = Vec::new();
            for (e, &label) in manifest.entries.iter().zip(&labels) {
                if st.contains(e, manifest) {
                    p.push(preds.aligned(&[&e.video_id])?.remove(0));
                    l.push(label);
                }
            }
            Ok(StratumResult {
                stratum: st,
                videos: p.len(),
                global_top1: global_topk(&p, &l, 1)?,
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalOptions {
    pub no_tube_ap: NoTubeAp,
    pub strata: Vec<Stratum>,
    pub superclasses: bool,
    /// The second, wider accuracy cut-off; clamped to the class count.
    pub top_k: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            no_tube_ap: NoTubeAp::Zero,
            strata: Stratum::ALL.to_vec(),
            superclasses: true,
            top_k: 5,
        }
    }
}

/// All metrics of one method on one labeled video set. Rates are fractions
/// in `[0, 1]`; `None` marks an undefined value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub classes: Vec<String>,
    pub videos_per_class: Vec<usize>,
    pub per_class_top1: Vec<Option<f64>>,
    pub per_class_ap: Vec<Option<f64>>,
    pub mean_top1: Option<f64>,
    pub top_k: usize,
    pub mean_top_k: Option<f64>,
    pub map: Option<f64>,
    pub global_top1: Option<f64>,
    pub global_top_k: Option<f64>,
    /// Classes without videos, excluded from the class means.
    pub empty_classes: Vec<String>,
    pub no_tube_videos: usize,
    pub strata: Vec<StratumResult>,
    pub confusion: Confusion,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub superclass: Option<Box<EvalReport>>,
}

fn base_report(
    classes: &[String],
    preds: &[VideoScores],
    labels: &[usize],
    options: &EvalOptions,
) -> Result<EvalReport> {
    let c = classes.len();
    let k = options.top_k.clamp(1, c.max(1));
    let top1 = mean_class_topk(preds, labels, c, 1)?;
    let topk = mean_class_topk(preds, labels, c, k)?;
    let ap = mean_average_precision(preds, labels, c, options.no_tube_ap)?;
    Ok(EvalReport {
        classes: classes.to_vec(),
        videos_per_class: top1.videos_per_class.clone(),
        per_class_ap: ap.per_class,
        mean_top1: top1.mean,
        top_k: k,
        mean_top_k: topk.mean,
        map: ap.mean,
        global_top1: global_topk(preds, labels, 1)?,
        global_top_k: global_topk(preds, labels, k)?,
        empty_classes: top1
            .empty_classes
            .iter()
            .map(|&i| classes[i].clone())
            .collect(),
        no_tube_videos: preds.iter().filter(|p| **p == VideoScores::NoTube).count(),
        strata: Vec::new(),
        confusion: confusion_matrix(preds, labels, c)?,
        per_class_top1: top1.per_class,
        superclass: None,
    })
}

/// Evaluates predictions against every video of a manifest.
pub fn evaluate(preds: &PredictionSet, manifest: &Manifest, options: &EvalOptions) -> Result<EvalReport> {
    if preds.classes != manifest.taxonomy.classes {
        return Err(Error::Taxonomy(
            "prediction class list does not match the taxonomy".into(),
        ));
    }
    let ids: Vec<&str> = manifest.entries.iter().map(|e| e.video_id.as_str()).collect();
    let aligned = preds.aligned(&ids)?;
    let labels = manifest.labels();
    let mut report = base_report(&preds.classes, &aligned, &labels, options)?;
    report.strata = stratified_report(preds, manifest, &options.strata)?;
    if options.superclasses {
        let (sp, sl) = remap_to_superclasses(&aligned, &labels, &manifest.taxonomy)?;
        let names = manifest.taxonomy.superclass_names();
        report.superclass = Some(Box::new(base_report(&names, &sp, &sl, options)?));
    }
    Ok(report)
}

pub fn save_report(path: &Path, report: &EvalReport) -> Result<()> {
    let text = serde_json::to_string_pretty(report).map_err(|e| Error::json(path, e))?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub fn load_report(path: &Path) -> Result<EvalReport> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(path, e))
}

/// Percentage with one decimal, `-` when undefined.
pub fn percent(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{:.1}", 100.0 * x))
}

/// Per-class table: class, video count, then top-1 and AP for each method,
/// closed by a mean row.
pub fn render_table(methods: &[(&str, &EvalReport)]) -> Result<String> {
    let Some((_, first)) = methods.first() else {
        return Err(Error::Argument("no reports to render".into()));
    };
    if methods.iter().any(|(_, r)| r.classes != first.classes) {
        return Err(Error::Argument("reports use different class lists".into()));
    }
    let cw = first
        .classes
        .iter()
        .map(String::len)
        .chain(["class".len(), "mean".len()])
        .max()
        .unwrap_or(5);
    let mw = methods.iter().map(|(n, _)| n.len()).max().unwrap_or(0).max(13);
    let mut s = String::new();
    let _ = write!(s, "{:<cw$}  {:>5}", "", "");
    for (name, _) in methods {
        let _ = write!(s, "  {name:^mw$}");
    }
    s.push('\n');
    let _ = write!(s, "{:<cw$}  {:>5}", "class", "#vid");
    for _ in methods {
        let _ = write!(s, "  {:>w$}  {:>6}", "top-1", "AP", w = mw - 8);
    }
    s.push('\n');
    for (i, class) in first.classes.iter().enumerate() {
        let _ = write!(s, "{class:<cw$}  {:>5}", first.videos_per_class[i]);
        for (_, r) in methods {
            let _ = write!(
                s,
                "  {:>w$}  {:>6}",
                percent(r.per_class_top1[i]),
                percent(r.per_class_ap[i]),
                w = mw - 8
            );
        }
        s.push('\n');
    }
    let total: usize = first.videos_per_class.iter().sum();
    let _ = write!(s, "{:<cw$}  {total:>5}", "mean");
    for (_, r) in methods {
        let _ = write!(
            s,
            "  {:>w$}  {:>6}",
            percent(r.mean_top1),
            percent(r.map),
            w = mw - 8
        );
    }
    s.push('\n');
    Ok(s)
}

/// Summary lines: class-mean and global accuracies, then the strata.
pub fn render_summary(name: &str, r: &EvalReport) -> String {
    let mut s = format!("{name}\n");
    let k = r.top_k;
    let _ = writeln!(s, "  mean top-1       {:>6}", percent(r.mean_top1));
    let _ = writeln!(s, "  mean top-{k:<2}      {:>6}", percent(r.mean_top_k));
    let _ = writeln!(s, "  mAP              {:>6}", percent(r.map));
    let _ = writeln!(s, "  global top-1     {:>6}", percent(r.global_top1));
    let _ = writeln!(s, "  global top-{k:<2}    {:>6}", percent(r.global_top_k));
    let _ = writeln!(s, "  videos w/o tube  {:>6}", r.no_tube_videos);
    for st in &r.strata {
        let _ = writeln!(
            s,
            "  {:<28} {:>5} videos  global top-1 {:>6}",
            st.stratum.name(),
            st.videos,
            percent(st.global_top1)
        );
    }
    if let Some(sup) = &r.superclass {
        let _ = writeln!(
            s,
            "  superclasses ({})  mean top-1 {:>6}  mAP {:>6}",
            sup.classes.len(),
            percent(sup.mean_top1),
            percent(sup.map)
        );
    }
    s
}
