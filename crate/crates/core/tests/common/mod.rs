//! Independent reference implementations shared by the integration suites.
#![allow(dead_code)]

use mimebench::linker::{Tube, VideoScores};
use mimebench::pose::{BBox, Detection};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

// ---------------------------------------------------------------- linker

/// One oracle tube entry: frame, interpolated flag, box, source index.
#[derive(Clone, Debug, PartialEq)]
pub struct OracleEntry {
    pub frame: usize,
    pub interpolated: bool,
    pub bbox: [f64; 4],
    pub source: Option<usize>,
}

fn oracle_iou(a: [f64; 4], b: [f64; 4]) -> f64 {
    let w = a[2].min(b[2]) - a[0].max(b[0]);
    let h = a[3].min(b[3]) - a[1].max(b[1]);
    if w <= 0.0 || h <= 0.0 {
        return 0.0;
    }
    let inter = w * h;
    let area = |r: [f64; 4]| (r[2] - r[0]) * (r[3] - r[1]);
    inter / (area(a) + area(b) - inter)
}

fn bbox_of(d: &Detection) -> [f64; 4] {
    [d.bbox.x_min, d.bbox.y_min, d.bbox.x_max, d.bbox.y_max]
}

/// Straight-line greedy linking over a flat detection list whose position
/// is the file order.
pub fn oracle_link(dets: &[Detection], threshold: f64, max_gap: usize) -> Vec<Vec<OracleEntry>> {
    let mut used = vec![false; dets.len()];
    let mut tubes = Vec::new();
    let Some(last_frame) = dets.iter().map(|d| d.frame_index).max() else {
        return tubes;
    };
    loop {
        // seed: highest score, then earliest frame, then earliest in file
        let mut seed: Option<usize> = None;
        for i in 0..dets.len() {
            if used[i] {
                continue;
            }
            seed = match seed {
                None => Some(i),
                Some(s) => {
                    let (a, b) = (&dets[i], &dets[s]);
                    let better = a.score > b.score
                        || (a.score == b.score && a.frame_index < b.frame_index);
                    if better {
                        Some(i)
                    } else {
                        Some(s)
                    }
                }
            };
        }
        let Some(s) = seed else { break };
        used[s] = true;

        let mut halves: [Vec<OracleEntry>; 2] = [Vec::new(), Vec::new()];
        for (h, forward) in [(0usize, true), (1usize, false)] {
            let mut cur = s;
            let mut misses = 0;
            let mut f = dets[s].frame_index as i64;
            loop {
                if misses == max_gap {
                    break;
                }
                f += if forward { 1 } else { -1 };
                if f < 0 || f > last_frame as i64 {
                    break;
                }
                let mut best: Option<(usize, f64)> = None;
                for j in 0..dets.len() {
                    if used[j] || dets[j].frame_index as i64 != f {
                        continue;
                    }
                    let v = oracle_iou(bbox_of(&dets[cur]), bbox_of(&dets[j]));
                    if v <= threshold {
                        continue;
                    }
                    best = match best {
                        None => Some((j, v)),
                        Some((b, bv)) => {
                            let take = v > bv
                                || (v == bv && dets[j].score > dets[b].score);
                            if take {
                                Some((j, v))
                            } else {
                                Some((b, bv))
                            }
                        }
                    };
                }
                match best {
                    None => misses += 1,
                    Some((j, _)) => {
                        let (fa, fb) = (dets[cur].frame_index, dets[j].frame_index);
                        let gap: Vec<usize> = if forward {
                            (fa + 1..fb).collect()
                        } else {
                            (fb + 1..fa).rev().collect()
                        };
                        for g in gap {
                            let alpha = (g as f64 - fa as f64) / (fb as f64 - fa as f64);
                            let (p, q) = (bbox_of(&dets[cur]), bbox_of(&dets[j]));
                            let mut b = [0.0; 4];
                            for k in 0..4 {
                                b[k] = p[k] + (q[k] - p[k]) * alpha;
                            }
                            halves[h].push(OracleEntry {
                                frame: g,
                                interpolated: true,
                                bbox: b,
                                source: None,
                            });
                        }
                        used[j] = true;
                        halves[h].push(OracleEntry {
                            frame: fb,
                            interpolated: false,
                            bbox: bbox_of(&dets[j]),
                            source: Some(j),
                        });
                        cur = j;
                        misses = 0;
                    }
                }
            }
        }
        let [fwd, mut bwd] = halves;
        bwd.reverse();
        bwd.push(OracleEntry {
            frame: dets[s].frame_index,
            interpolated: false,
            bbox: bbox_of(&dets[s]),
            source: Some(s),
        });
        bwd.extend(fwd);
        tubes.push(bwd);
    }
    tubes
}

pub fn tube_as_oracle(t: &Tube) -> Vec<OracleEntry> {
    t.entries
        .iter()
        .map(|e| OracleEntry {
            frame: e.detection.frame_index,
            interpolated: e.interpolated,
            bbox: bbox_of(&e.detection),
            source: (!e.interpolated).then_some(e.detection.order),
        })
        .collect()
}

pub fn detection(frame: usize, b: [f64; 4], score: f64) -> Detection {
    Detection {
        frame_index: frame,
        bbox: BBox::new(b[0], b[1], b[2], b[3]),
        score,
        joints2d: vec![[(b[0] + b[2]) / 2.0, (b[1] + b[3]) / 2.0]],
        joint_scores: vec![score],
        joints3d: None,
        features: Some(vec![b[0], b[1]]),
        order: 0,
    }
}

/// Up to `max_frames` frames with up to 3 detections each on a coarse grid,
/// so IoU and score ties occur.
pub fn random_instance(rng: &mut ChaCha8Rng, max_frames: usize) -> Vec<Detection> {
    let frames = rng.random_range(1..=max_frames);
    let mut out = Vec::new();
    for f in 0..frames {
        for _ in 0..rng.random_range(0..=3) {
            let x = rng.random_range(0..6) as f64 * 2.0;
            let y = rng.random_range(0..3) as f64 * 2.0;
            let w = rng.random_range(2..8) as f64;
            let h = rng.random_range(2..8) as f64;
            let score = [0.3, 0.5, 0.8, 0.9][rng.random_range(0..4)];
            out.push(detection(f, [x, y, x + w, y + h], score));
        }
    }
    // shuffle file order across frames
    for i in (1..out.len()).rev() {
        let j = rng.random_range(0..=i);
        out.swap(i, j);
    }
    out
}

// --------------------------------------------------------------- metrics

/// Classes ordered by descending score, index ascending among equals.
fn ordering(p: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..p.len()).collect();
    // insertion sort keeps the comparison explicit
    for i in 1..idx.len() {
        let mut j = i;
        while j > 0 && p[idx[j]] > p[idx[j - 1]] {
            idx.swap(j, j - 1);
            j -= 1;
        }
    }
    idx
}

pub fn naive_rank(p: &[f64], label: usize) -> usize {
    ordering(p).iter().position(|&c| c == label).unwrap() + 1
}

pub fn naive_hit(pred: &VideoScores, label: usize, k: usize) -> bool {
    match pred {
        VideoScores::NoTube => false,
        VideoScores::Scores(p) => ordering(p)[..k].contains(&label),
    }
}

/// Mean over non-empty classes of the per-class top-k rate.
pub fn naive_mean_topk(preds: &[VideoScores], labels: &[usize], classes: usize, k: usize) -> Option<f64> {
    let mut rates = Vec::new();
    for c in 0..classes {
        let mut n = 0usize;
        let mut hits = 0usize;
        for (p, &l) in preds.iter().zip(labels) {
            if l == c {
                n += 1;
                if naive_hit(p, l, k) {
                    hits += 1;
                }
            }
        }
        if n > 0 {
            rates.push(hits as f64 / n as f64);
        }
    }
    if rates.is_empty() {
        None
    } else {
        let mut s = 0.0;
        for r in &rates {
            s += r;
        }
        Some(s / rates.len() as f64)
    }
}

pub fn naive_global_topk(preds: &[VideoScores], labels: &[usize], k: usize) -> Option<f64> {
    if preds.is_empty() {
        return None;
    }
    let hits = preds.iter().zip(labels).filter(|(p, &l)| naive_hit(p, l, k)).count();
    Some(hits as f64 / preds.len() as f64)
}

/// Per-class mean inverse rank; no-tube videos count as zero.
pub fn naive_ap(preds: &[VideoScores], labels: &[usize], classes: usize) -> Vec<Option<f64>> {
    (0..classes)
        .map(|c| {
            let mut sum = 0.0;
            let mut n = 0usize;
            for (p, &l) in preds.iter().zip(labels) {
                if l != c {
                    continue;
                }
                n += 1;
                if let VideoScores::Scores(s) = p {
                    sum += 1.0 / naive_rank(s, c) as f64;
                }
            }
            (n > 0).then(|| sum / n as f64)
        })
        .collect()
}

pub fn naive_map(preds: &[VideoScores], labels: &[usize], classes: usize) -> Option<f64> {
    let present: Vec<f64> = naive_ap(preds, labels, classes).into_iter().flatten().collect();
    if present.is_empty() {
        return None;
    }
    let mut s = 0.0;
    for v in &present {
        s += v;
    }
    Some(s / present.len() as f64)
}

/// `m[true][predicted]` plus a per-class count of no-tube videos.
pub fn naive_confusion(
    preds: &[VideoScores],
    labels: &[usize],
    classes: usize,
) -> (Vec<Vec<usize>>, Vec<usize>) {
    let mut m = vec![vec![0; classes]; classes];
    let mut none = vec![0; classes];
    for (p, &l) in preds.iter().zip(labels) {
        match p {
            VideoScores::NoTube => none[l] += 1,
            VideoScores::Scores(s) => m[l][ordering(s)[0]] += 1,
        }
    }
    (m, none)
}

/// Random predictions over `classes` drawn from a few probability levels;
/// about one in ten is a no-tube video.
pub fn random_predictions(
    rng: &mut ChaCha8Rng,
    videos: usize,
    classes: usize,
) -> (Vec<VideoScores>, Vec<usize>) {
    let mut preds = Vec::with_capacity(videos);
    let mut labels = Vec::with_capacity(videos);
    for _ in 0..videos {
        labels.push(rng.random_range(0..classes));
        if rng.random_range(0..10) == 0 {
            preds.push(VideoScores::NoTube);
            continue;
        }
        let w: Vec<f64> = (0..classes).map(|_| rng.random_range(0..4) as f64 + 0.5).collect();
        let total: f64 = w.iter().sum();
        preds.push(VideoScores::Scores(w.iter().map(|v| v / total).collect()));
    }
    (preds, labels)
}

// ----------------------------------------------------- numerical kernels

/// `out[t,c] = b[c] + Σ_k Σ_d x[t+k,d]·w[k,d,c]` with explicit loops.
pub fn loop_conv(x: &[Vec<f64>], w: &[Vec<Vec<f64>>], b: &[f64]) -> Vec<Vec<f64>> {
    let (l, k, d, c) = (x.len(), w.len(), x[0].len(), b.len());
    let mut out = vec![vec![0.0; c]; l + 1 - k];
    for (t, row) in out.iter_mut().enumerate() {
        for ch in 0..c {
            let mut s = b[ch];
            for kk in 0..k {
                for dd in 0..d {
                    s += x[t + kk][dd] * w[kk][dd][ch];
                }
            }
            row[ch] = s;
        }
    }
    out
}

pub fn exp_softmax(z: &[f64]) -> Vec<f64> {
    let e: Vec<f64> = z.iter().map(|v| v.exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

/// Smallest distance to zero of any ReLU input of the graph model on these
/// clips. Central differences are only an oracle away from the kinks.
pub fn stgcn_relu_margin(m: &mimebench::classifiers::MiniStgcn, clips: &[mimebench::tensor::Tensor]) -> f64 {
    let p = |n: &str| m.params.get(n).unwrap().clone();
    let (ws, tk, tb) = (p("w_spatial"), p("t_kernel"), p("t_bias"));
    let adj = &m.adjacency;
    let (j, h, kt) = (m.joints(), m.hidden, m.kt);
    let mut margin = f64::INFINITY;
    for x in clips {
        let t_in = x.shape()[0];
        let mut spatial = vec![vec![vec![0.0; h]; j]; t_in];
        for t in 0..t_in {
            for a in 0..j {
                for hh in 0..h {
                    let mut z = 0.0;
                    for ch in 0..3 {
                        let mut mixed = 0.0;
                        for b in 0..j {
                            mixed += adj.at(&[a, b]) * x.at(&[t, b, ch]);
                        }
                        z += mixed * ws.at(&[ch, hh]);
                    }
                    margin = margin.min(z.abs());
                    spatial[t][a][hh] = z.max(0.0);
                }
            }
        }
        for a in 0..j {
            for t in 0..t_in + 1 - kt {
                for h2 in 0..h {
                    let mut z = tb.at(&[h2]);
                    for kk in 0..kt {
                        for h1 in 0..h {
                            z += spatial[t + kk][a][h1] * tk.at(&[kk, h1, h2]);
                        }
                    }
                    margin = margin.min(z.abs());
                }
            }
        }
    }
    margin
}

pub const KINK_MARGIN: f64 = 1e-4;

/// Random `[5, J, 3]` clips redrawn until every ReLU input clears
/// [`KINK_MARGIN`].
pub fn clips_away_from_kinks(
    m: &mimebench::classifiers::MiniStgcn,
    rng: &mut ChaCha8Rng,
) -> Vec<mimebench::tensor::Tensor> {
    loop {
        let clips: Vec<_> = (0..2)
            .map(|_| mimebench::tensor::Tensor::from_fn(&[5, m.joints(), 3], |_| rng.random_range(-1.0..1.0)))
            .collect();
        if stgcn_relu_margin(m, &clips) > KINK_MARGIN {
            return clips;
        }
    }
}
