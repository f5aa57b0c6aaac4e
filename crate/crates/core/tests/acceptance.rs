//! Acceptance criteria. Each prints one PASS/FAIL line; the test fails if
//! any criterion fails. Run with `--nocapture` to see the lines.

mod common;

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use common::*;
use mimebench::classifiers::{normalized_adjacency, MiniStgcn, SipNetHead};
use mimebench::cli::main_with_args;
use mimebench::eval::{
    confusion_matrix, global_topk, load_report, mean_average_precision, mean_class_accuracy,
    mean_class_topk, superclass_remap, NoTubeAp, Stratum,
};
use mimebench::linker::{link_tubes, make_mask_spec, LinkerConfig, MaskMode};
use mimebench::pose::{Detections, Manifest, ObjectSize, Skeleton};
use mimebench::tensor::{check_gradients, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const GRAD_TOL: f64 = 1e-4;
const GRAD_STEP: f64 = 1e-6;
const GRAD_FLOOR: f64 = 1e-5;
const GRAD_BUDGET: Duration = Duration::from_secs(10);
const LINK_BUDGET: Duration = Duration::from_secs(5);
const SYNTH_BUDGET: Duration = Duration::from_secs(120);
const MASS_TOL: f64 = 1e-12;
const SYNTH_MIN_ACCURACY: f64 = 0.9;

/// Per-class video counts of the reference manifest.
const CLASS_COUNTS: [(&str, usize); 50] = [
    ("archery", 19),
    ("bowling", 13),
    ("brushing hair", 20),
    ("brushing teeth", 15),
    ("canoeing or kayaking", 14),
    ("catching or throwing baseball", 14),
    ("catching or throwing frisbee", 14),
    ("clean and jerk", 13),
    ("cleaning windows", 16),
    ("climbing a rope", 14),
    ("climbing ladder", 13),
    ("deadlifting", 11),
    ("dribbling basketball", 18),
    ("drinking", 27),
    ("driving car", 16),
    ("dunking basketball", 10),
    ("eating cake", 19),
    ("eating ice cream", 11),
    ("flying kite", 10),
    ("golf driving", 16),
    ("hitting baseball", 15),
    ("hurdling", 10),
    ("juggling balls", 12),
    ("juggling soccer ball", 18),
    ("opening bottle", 9),
    ("playing accordion", 11),
    ("playing basketball", 14),
    ("playing bass guitar", 13),
    ("playing guitar", 18),
    ("playing piano", 17),
    ("playing saxophone", 13),
    ("playing tennis", 19),
    ("playing trumpet", 14),
    ("playing violin", 20),
    ("playing volleyball", 13),
    ("punching person (boxing)", 16),
    ("reading book", 10),
    ("reading newspaper", 10),
    ("shooting basketball", 19),
    ("shooting goal (soccer)", 14),
    ("skiing (not slalom or crosscountry)", 10),
    ("skiing slalom", 10),
    ("skipping rope", 12),
    ("smoking", 19),
    ("surfing water", 10),
    ("sweeping floor", 11),
    ("sword fighting", 17),
    ("tying tie", 8),
    ("walking the dog", 15),
    ("writing", 13),
];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn run_cli(args: &[&str]) -> i32 {
    main_with_args(std::iter::once("mimebench").chain(args.iter().copied()))
}

fn s(p: &Path) -> &str {
    p.to_str().expect("utf-8 temp path")
}

// 1 ------------------------------------------------------------------------

fn gradients() -> Outcome {
    let start = Instant::now();
    let mut worst = (0.0f64, String::new());
    let adjacency = normalized_adjacency(&Skeleton::chain(4).unwrap());
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let head = SipNetHead::new(4, 8, 3, &mut rng).unwrap();
        let clips: Vec<Tensor> = (0..2)
            .map(|_| Tensor::from_fn(&[6, 8], |_| rng.random_range(-1.0..1.0)))
            .collect();
        let labels: Vec<usize> = (0..2).map(|_| rng.random_range(0..3)).collect();
        let r = check_gradients(&head.params, GRAD_STEP, GRAD_FLOOR, |t, v| {
            head.batch_loss(t, v, &clips, &labels)
        })
        .unwrap();
        if r.max_relative_error > worst.0 {
            worst = (r.max_relative_error, format!("sipnet seed {seed}"));
        }

        let mut params = MiniStgcn::new(adjacency.clone(), 5, 3, 3, &mut rng).unwrap().params;
        for name in ["t_bias", "b_cls"] {
            params
                .get_mut(name)
                .unwrap()
                .data_mut()
                .iter_mut()
                .for_each(|x| *x = rng.random_range(-0.1..0.1));
        }
        let net = MiniStgcn::from_params(adjacency.clone(), 5, 3, 3, params.clone()).unwrap();
        let clips = clips_away_from_kinks(&net, &mut rng);
        let labels: Vec<usize> = (0..2).map(|_| rng.random_range(0..3)).collect();
        let r = check_gradients(&params, GRAD_STEP, GRAD_FLOOR, |t, v| {
            net.batch_loss(t, v, &clips, &labels)
        })
        .unwrap();
        if r.max_relative_error > worst.0 {
            worst = (r.max_relative_error, format!("graph model seed {seed}"));
        }
    }
    let elapsed = start.elapsed();
    outcome(
        worst.0 < GRAD_TOL && elapsed < GRAD_BUDGET,
        format!(
            "max relative error {:.2e} ({}), {:.2}s",
            worst.0,
            worst.1,
            elapsed.as_secs_f64()
        ),
    )
}

// 2 ------------------------------------------------------------------------

/// Links 1000 seeded instances; returns mismatches and a byte dump of the
/// linker output.
fn linker_instances() -> (usize, Vec<u8>) {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut mismatches = 0;
    let mut dump = Vec::new();
    for _ in 0..1000 {
        let dets = random_instance(&mut rng, 5);
        let threshold = [0.1, 0.3, 0.5][rng.random_range(0..3)];
        let max_gap = rng.random_range(1..=4);
        let cfg = LinkerConfig {
            iou_threshold: threshold,
            max_gap,
        };
        let tubes = link_tubes(&Detections::from_vec(dets.clone()), &cfg).unwrap();
        let got: Vec<_> = tubes.iter().map(tube_as_oracle).collect();
        if got != oracle_link(&dets, threshold, max_gap) {
            mismatches += 1;
        }
        dump.extend(format!("{got:?}\n").into_bytes());
    }
    (mismatches, dump)
}

fn linker() -> (Outcome, Vec<u8>) {
    let start = Instant::now();
    let (mismatches, dump) = linker_instances();
    let elapsed = start.elapsed();
    (
        outcome(
            mismatches == 0 && elapsed < LINK_BUDGET,
            format!("{mismatches}/1000 mismatches, {:.3}s", elapsed.as_secs_f64()),
        ),
        dump,
    )
}

// 3 ------------------------------------------------------------------------

fn metrics() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut failures = 0;
    for _ in 0..1000 {
        let classes = rng.random_range(2..=6);
        let videos = rng.random_range(0..=30);
        let (preds, labels) = random_predictions(&mut rng, videos, classes);
        let k = classes.min(5);
        let ok = mean_class_accuracy(&preds, &labels, classes).unwrap().mean
            == naive_mean_topk(&preds, &labels, classes, 1)
            && mean_class_topk(&preds, &labels, classes, k).unwrap().mean
                == naive_mean_topk(&preds, &labels, classes, k)
            && global_topk(&preds, &labels, k).unwrap() == naive_global_topk(&preds, &labels, k)
            && mean_average_precision(&preds, &labels, classes, NoTubeAp::Zero)
                .unwrap()
                .per_class
                == naive_ap(&preds, &labels, classes)
            && mean_average_precision(&preds, &labels, classes, NoTubeAp::Zero)
                .unwrap()
                .mean
                == naive_map(&preds, &labels, classes)
            && {
                let c = confusion_matrix(&preds, &labels, classes).unwrap();
                (c.matrix, c.no_tube) == naive_confusion(&preds, &labels, classes)
            };
        if !ok {
            failures += 1;
        }
    }
    outcome(failures == 0, format!("{failures}/1000 instances differ"))
}

// 4 ------------------------------------------------------------------------

fn manifest() -> Outcome {
    let m = Manifest::reference_mimetics();
    let mut problems = Vec::new();
    if m.len() != 713 {
        problems.push(format!("{} videos", m.len()));
    }
    if m.taxonomy.classes.len() != 50 {
        problems.push(format!("{} classes", m.taxonomy.classes.len()));
    }
    let counts = m.class_counts();
    for (class, n) in CLASS_COUNTS {
        if counts.get(class) != Some(&n) {
            problems.push(format!("{class}: {:?} != {n}", counts.get(class)));
        }
    }
    let strata = [
        (Stratum::MimeArtist, 203),
        (Stratum::NotMimeArtist, 510),
        (Stratum::ObjectIrrelevant, 644),
        (Stratum::SceneIrrelevant, 644),
        (Stratum::ObjectAndSceneIrrelevant, 584),
    ];
    for (st, n) in strata {
        let got = m.entries.iter().filter(|e| st.contains(e, &m)).count();
        if got != n {
            problems.push(format!("{}: {got} != {n}", st.name()));
        }
    }
    let parts = m.object_size_partition();
    for (size, want) in [(ObjectSize::NoneOrSmall, (19, 268)), (ObjectSize::Large, (31, 445))] {
        if parts.get(&size) != Some(&want) {
            problems.push(format!("{size:?}: {:?} != {want:?}", parts.get(&size)));
        }
    }
    let detail = if problems.is_empty() {
        "713 videos, 50 classes, per-class counts, subsets 203/510/644/644/584, objects 19/268 vs 31/445".into()
    } else {
        problems.join("; ")
    };
    outcome(problems.is_empty(), detail)
}

// 5 ------------------------------------------------------------------------

fn superclasses() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(45);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let raw: Vec<f64> = (0..400).map(|_| rng.random::<f64>()).collect();
        let total: f64 = raw.iter().sum();
        let probs: Vec<f64> = raw.iter().map(|v| v / total).collect();
        let groups = rng.random_range(1..=400);
        let index: Vec<usize> = (0..400).map(|_| rng.random_range(0..groups)).collect();
        let out = superclass_remap(&probs, &index, groups).unwrap();
        let before: f64 = probs.iter().sum();
        worst = worst.max((out.iter().sum::<f64>() - before).abs());
    }
    let groups = Manifest::reference_mimetics().taxonomy.superclass_names().len();
    outcome(
        worst <= MASS_TOL && groups == 45,
        format!("max mass drift {worst:.1e}, {groups} superclasses"),
    )
}

// 6 ------------------------------------------------------------------------

struct SynthRun {
    accuracy_t32: f64,
    accuracy_t1: f64,
    elapsed: Duration,
}

/// Synthesizes, links, trains, predicts and evaluates under `root`.
fn synth_pipeline(root: &Path) -> SynthRun {
    let start = Instant::now();
    let d = root.join("data");
    let det = d.join("detections");
    let tubes = root.join("tubes");
    let (train_m, test_m, tax) = (
        d.join("train_manifest.csv"),
        d.join("test_manifest.csv"),
        d.join("taxonomy.json"),
    );
    let w = ["--workers", "1"];
    let ok = |args: &[&str]| {
        let mut all = w.to_vec();
        all.extend_from_slice(args);
        assert_eq!(run_cli(&all), 0, "{args:?}");
    };
    ok(&[
        "synth", "--out", s(&d), "--seed", "7", "--classes", "5", "--videos-per-class", "40",
        "--feature-dim", "64",
    ]);
    ok(&["link", "--detections", s(&det), "--out", s(&tubes)]);
    let mut acc = [0.0; 2];
    for (slot, t) in [(0, "32"), (1, "1")] {
        let model = root.join(format!("sipnet_t{t}.ckpt"));
        let preds = root.join(format!("sipnet_t{t}.jsonl"));
        let report = root.join(format!("sipnet_t{t}.report.json"));
        let table = root.join(format!("sipnet_t{t}.txt"));
        let data = ["--detections", s(&det), "--tubes", s(&tubes), "--taxonomy", s(&tax)];
        let mut train = vec![
            "train", "--manifest", s(&train_m), "--out", s(&model), "--head", "sipnet", "-T", t,
            "--seed", "11", "--epochs", "50",
        ];
        train.extend_from_slice(&data);
        ok(&train);
        let mut predict = vec![
            "predict", "--manifest", s(&test_m), "--model", s(&model), "--out", s(&preds),
        ];
        predict.extend_from_slice(&data);
        ok(&predict);
        ok(&[
            "eval", "--predictions", s(&preds), "--manifest", s(&test_m), "--taxonomy", s(&tax),
            "--out", s(&report), "--table", s(&table), "--no-superclasses",
        ]);
        acc[slot] = load_report(&report).unwrap().mean_top1.unwrap_or(0.0);
    }
    SynthRun {
        accuracy_t32: acc[0],
        accuracy_t1: acc[1],
        elapsed: start.elapsed(),
    }
}

fn synthetic(run: &SynthRun) -> Outcome {
    outcome(
        run.accuracy_t32 >= SYNTH_MIN_ACCURACY
            && run.accuracy_t32 > run.accuracy_t1
            && run.elapsed < SYNTH_BUDGET,
        format!(
            "mean class accuracy T=32 {:.3}, T=1 {:.3}, {:.2}s single-threaded",
            run.accuracy_t32,
            run.accuracy_t1,
            run.elapsed.as_secs_f64()
        ),
    )
}

// 7 ------------------------------------------------------------------------

fn masking() -> Outcome {
    let (w, h) = (24u32, 16u32);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut bad_pixels = 0usize;
    for _ in 0..200 {
        let dets = random_instance(&mut rng, 5);
        let tubes = link_tubes(&Detections::from_vec(dets), &LinkerConfig::default()).unwrap();
        let fg = make_mask_spec(&tubes, MaskMode::MaskTubes, (w, h));
        let bg = make_mask_spec(&tubes, MaskMode::MaskBackground, (w, h));
        for frame in 0..5 {
            let (a, b) = (fg.rasterize(frame), bg.rasterize(frame));
            bad_pixels += a.iter().zip(&b).filter(|(x, y)| x == y).count();
        }
    }
    outcome(
        bad_pixels == 0,
        format!("{bad_pixels} pixels filled by both or neither mode over 200 tube sets"),
    )
}

// 8 ------------------------------------------------------------------------

fn files_under(root: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in fs::read_dir(&dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p.strip_prefix(root).unwrap().to_path_buf());
            }
        }
    }
    out.sort();
    out
}

/// Re-runs both workloads into the same paths as the first run and compares
/// every output file byte for byte.
fn determinism(link_dump: &[u8], root: &Path) -> Outcome {
    let first = root.with_extension("first");
    fs::rename(root, &first).unwrap();
    synth_pipeline(root);
    let (_, dump_again) = linker_instances();
    let files = files_under(&first);
    let same_tree = files == files_under(root);
    let differing: Vec<String> = files
        .iter()
        .filter(|f| fs::read(first.join(f)).ok() != fs::read(root.join(f)).ok())
        .map(|f| f.display().to_string())
        .collect();
    let pass = same_tree && differing.is_empty() && dump_again == link_dump;
    outcome(
        pass,
        format!(
            "{} pipeline files compared, {} differ; linker output {}",
            files.len(),
            differing.len(),
            if dump_again == link_dump { "identical" } else { "differs" }
        ),
    )
}

#[test]
fn acceptance() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path().join("run");

    let (c2, link_dump) = linker();
    let synth_run = synth_pipeline(&root);
    let results = [
        ("1 gradient correctness", gradients()),
        ("2 linker oracle equivalence", c2),
        ("3 metric oracle equivalence", metrics()),
        ("4 manifest fidelity", manifest()),
        ("5 superclass conservation", superclasses()),
        ("6 synthetic end-to-end", synthetic(&synth_run)),
        ("7 masking partition", masking()),
        ("8 determinism", determinism(&link_dump, &root)),
    ];
    for (name, o) in &results {
        println!("{} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
    }
    let failed: Vec<&str> = results.iter().filter(|(_, o)| !o.pass).map(|(n, _)| *n).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
