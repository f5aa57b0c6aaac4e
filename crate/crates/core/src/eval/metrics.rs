use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linker::VideoScores;
use crate::pose::ClassTaxonomy;

/// 1-based rank of `label`: one plus the classes scoring strictly higher,
/// plus the equally scoring classes with a smaller index.
pub fn rank_of(probs: &[f64], label: usize) -> usize {
    let p = probs[label];
    1 + probs
        .iter()
        .enumerate()
        .filter(|&(j, &q)| q > p || (q == p && j < label))
        .count()
}

/// Highest-probability class, smallest index on ties.
pub fn top1(pred: &VideoScores) -> Option<usize> {
    match pred {
        VideoScores::Scores(p) if !p.is_empty() => {
            let mut best = 0;
            for (j, &q) in p.iter().enumerate().skip(1) {
                if q > p[best] {
                    best = j;
                }
            }
            Some(best)
        }
        _ => None,
    }
}

/// Whether `label` is among the `k` best classes. A video without tubes is
/// never a hit.
pub fn topk_hit(pred: &VideoScores, label: usize, k: usize) -> Result<bool> {
    match pred {
        VideoScores::NoTube => {
            if k == 0 {
                return Err(Error::Argument("k must be at least 1".into()));
            }
            Ok(false)
        }
        VideoScores::Scores(p) => {
            if k == 0 || k > p.len() {
                return Err(Error::Argument(format!(
                    "k = {k} outside 1..={}",
                    p.len()
                )));
            }
            if label >= p.len() {
                return Err(Error::Index {
                    index: label,
                    len: p.len(),
                });
            }
            Ok(rank_of(p, label) <= k)
        }
    }
}

fn check_lengths(preds: &[VideoScores], labels: &[usize], classes: usize) -> Result<()> {
    if preds.len() != labels.len() {
        return Err(Error::Argument(format!(
            "{} predictions for {} labels",
            preds.len(),
            labels.len()
        )));
    }
    if let Some(&l) = labels.iter().find(|&&l| l >= classes) {
        return Err(Error::Index {
            index: l,
            len: classes,
        });
    }
    Ok(())
}

/// Per-class rates and their unweighted mean.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassMean {
    /// Mean over classes that have at least one video; `None` if none do.
    pub mean: Option<f64>,
    pub per_class: Vec<Option<f64>>,
    pub videos_per_class: Vec<usize>,
    /// Classes without videos, left out of the mean.
    pub empty_classes: Vec<usize>,
}

fn class_mean(per_class_hits: &[f64], counts: &[usize]) -> ClassMean {
    let per_class: Vec<Option<f64>> = per_class_hits
        .iter()
        .zip(counts)
        .map(|(&h, &n)| (n > 0).then(|| h / n as f64))
        .collect();
    let present: Vec<f64> = per_class.iter().flatten().copied().collect();
    ClassMean {
        mean: (!present.is_empty()).then(|| present.iter().sum::<f64>() / present.len() as f64),
        empty_classes: counts
            .iter()
            .enumerate()
            .filter(|&(_, &n)| n == 0)
            .map(|(c, _)| c)
            .collect(),
        per_class,
        videos_per_class: counts.to_vec(),
    }
}

/// Mean over classes of the per-class top-`k` rate.
pub fn mean_class_topk(
    preds: &[VideoScores],
    labels: &[usize],
    classes: usize,
    k: usize,
) -> Result<ClassMean> {
    check_lengths(preds, labels, classes)?;
    let mut hits = vec![0.0; classes];
    let mut counts = vec![0usize; classes];
    for (p, &l) in preds.iter().zip(labels) {
        counts[l] += 1;
        if topk_hit(p, l, k)? {
            hits[l] += 1.0;
        }
    }
    Ok(class_mean(&hits, &counts))
}

pub fn mean_class_accuracy(preds: &[VideoScores], labels: &[usize], classes: usize) -> Result<ClassMean> {
    mean_class_topk(preds, labels, classes, 1)
}

/// Fraction of all videos with a top-`k` hit; `None` for no videos.
pub fn global_topk(preds: &[VideoScores], labels: &[usize], k: usize) -> Result<Option<f64>> {
    if preds.len() != labels.len() {
        return Err(Error::Argument(format!(
            "{} predictions for {} labels",
            preds.len(),
            labels.len()
        )));
    }
    if preds.is_empty() {
        return Ok(None);
    }
    let mut hits = 0usize;
    for (p, &l) in preds.iter().zip(labels) {
        if topk_hit(p, l, k)? {
            hits += 1;
        }
    }
    Ok(Some(hits as f64 / preds.len() as f64))
}

/// How a video without tubes enters average precision.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoTubeAp {
    /// Contributes an inverse rank of 0.
    #[default]
    Zero,
    /// Left out of the class average.
    Exclude,
}

/// Mean inverse rank of `label` over the given videos of that class.
pub fn average_precision(preds: &[&VideoScores], label: usize, no_tube: NoTubeAp) -> Option<f64> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for p in preds {
        match p {
            VideoScores::Scores(s) => {
                sum += 1.0 / rank_of(s, label) as f64;
                n += 1;
            }
            VideoScores::NoTube => {
                if no_tube == NoTubeAp::Zero {
                    n += 1;
                }
            }
        }
    }
    (n > 0).then(|| sum / n as f64)
}

/// Per-class AP and their mean over classes with videos.
pub fn mean_average_precision(
    preds: &[VideoScores],
    labels: &[usize],
    classes: usize,
    no_tube: NoTubeAp,
) -> Result<ClassMean> {
    check_lengths(preds, labels, classes)?;
    let mut by_class: Vec<Vec<&VideoScores>> = vec![Vec::new(); classes];
    for (p, &l) in preds.iter().zip(labels) {
        if let VideoScores::Scores(s) = p {
            if s.len() != classes {
                return Err(Error::dim(
                    "mean_average_precision",
                    format!("{} scores for {classes} classes", s.len()),
                ));
            }
        }
        by_class[l].push(p);
    }
    let per_class: Vec<Option<f64>> = by_class
        .iter()
        .enumerate()
        .map(|(c, ps)| average_precision(ps, c, no_tube))
        .collect();
    let present: Vec<f64> = per_class.iter().flatten().copied().collect();
    Ok(ClassMean {
        mean: (!present.is_empty()).then(|| present.iter().sum::<f64>() / present.len() as f64),
        empty_classes: per_class
            .iter()
            .enumerate()
            .filter(|(_, a)| a.is_none())
            .map(|(c, _)| c)
            .collect(),
        per_class,
        videos_per_class: by_class.iter().map(Vec::len).collect(),
    })
}

/// Sums probabilities into groups: `out[index[i]] += probs[i]`.
pub fn superclass_remap(probs: &[f64], index: &[usize], groups: usize) -> Result<Vec<f64>> {
    if probs.len() != index.len() {
        return Err(Error::Taxonomy(format!(
            "{} probabilities but {} mapped classes",
            probs.len(),
            index.len()
        )));
    }
    let mut out = vec![0.0; groups];
    for (&p, &g) in probs.iter().zip(index) {
        *out.get_mut(g).ok_or_else(|| {
            Error::Taxonomy(format!("superclass index {g} outside {groups} groups"))
        })? += p;
    }
    Ok(out)
}

/// Maps predictions and labels from classes to superclasses.
pub fn remap_to_superclasses(
    preds: &[VideoScores],
    labels: &[usize],
    taxonomy: &ClassTaxonomy,
) -> Result<(Vec<VideoScores>, Vec<usize>)> {
    let index = taxonomy.superclass_indices();
    let groups = taxonomy.superclass_names().len();
    check_lengths(preds, labels, index.len())?;
    let preds = preds
        .iter()
        .map(|p| match p {
            VideoScores::Scores(s) => superclass_remap(s, &index, groups).map(VideoScores::Scores),
            VideoScores::NoTube => Ok(VideoScores::NoTube),
        })
        .collect::<Result<_>>()?;
    Ok((preds, labels.iter().map(|&l| index[l]).collect()))
}

/// `matrix[i][j]` counts videos of class `i` predicted as `j`. Videos
/// without tubes are counted in `no_tube[i]` instead.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub matrix: Vec<Vec<usize>>,
    pub no_tube: Vec<usize>,
}

impl Confusion {
    pub fn trace(&self) -> usize {
        (0..self.matrix.len()).map(|i| self.matrix[i][i]).sum()
    }

    pub fn total(&self) -> usize {
        self.matrix.iter().flatten().sum::<usize>() + self.no_tube.iter().sum::<usize>()
    }

    /// Videos of class `i`, with or without tubes.
    pub fn row_total(&self, i: usize) -> usize {
        self.matrix[i].iter().sum::<usize>() + self.no_tube[i]
    }
}

pub fn confusion_matrix(preds: &[VideoScores], labels: &[usize], classes: usize) -> Result<Confusion> {
    check_lengths(preds, labels, classes)?;
    let mut c = Confusion {
        matrix: vec![vec![0; classes]; classes],
        no_tube: vec![0; classes],
    };
    for (p, &l) in preds.iter().zip(labels) {
        match top1(p) {
            Some(j) if j < classes => c.matrix[l][j] += 1,
            Some(j) => {
                return Err(Error::Index {
                    index: j,
                    len: classes,
                })
            }
            None => c.no_tube[l] += 1,
        }
    }
    Ok(c)
}
