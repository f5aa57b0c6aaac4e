use std::fs;
use std::path::Path;

use mimebench::cli::main_with_args;
use mimebench::eval::load_report;

fn run(args: &[&str]) -> i32 {
    main_with_args(std::iter::once("mimebench").chain(args.iter().copied()))
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn synth(out: &Path, extra: &[&str]) {
    let mut args = vec!["synth", "--out", s(out), "--seed", "3", "--videos-per-class", "12", "--test-per-class", "4"];
    args.extend_from_slice(extra);
    assert_eq!(run(&args), 0);
}

fn read_dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    out.sort();
    out
}

#[test]
fn help_and_version_succeed() {
    assert_eq!(run(&["--help"]), 0);
    assert_eq!(run(&["--version"]), 0);
}

#[test]
fn invalid_input_exits_with_2() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("nope");
    assert_eq!(run(&["link", "--detections", s(&missing), "--out", s(tmp.path())]), 2);
    // seed is mandatory
    assert_eq!(run(&["synth", "--out", s(&tmp.path().join("d"))]), 2);
    let cfg = tmp.path().join("c.json");
    fs::write(&cfg, r#"{"lr": 0.1}"#).unwrap();
    assert_eq!(run(&["--config", s(&cfg), "synth", "--out", s(tmp.path()), "--seed", "1"]), 2);
    assert_eq!(run(&["link", "--bogus"]), 2);
}

#[test]
fn empty_detection_directory_links_nothing() {
    let tmp = tempfile::tempdir().unwrap();
    let dets = tmp.path().join("dets");
    fs::create_dir(&dets).unwrap();
    let out = tmp.path().join("tubes");
    assert_eq!(run(&["link", "--detections", s(&dets), "--out", s(&out)]), 0);
    let cov: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("coverage.json")).unwrap()).unwrap();
    assert_eq!(cov["videos"], 0);
    assert!(out.join("run_manifest.json").is_file());
}

#[test]
fn config_file_supplies_seed_and_flags_win() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("c.json");
    fs::write(&cfg, r#"{"seed": 5, "synth": {"seed": 5, "classes": 3, "videos_per_class": 4, "test_per_class": 1}}"#).unwrap();
    let out = tmp.path().join("d");
    assert_eq!(run(&["--config", s(&cfg), "synth", "--out", s(&out), "--classes", "2"]), 0);
    let tax: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("taxonomy.json")).unwrap()).unwrap();
    assert_eq!(tax["classes"].as_array().unwrap().len(), 2);
}

#[test]
fn synth_and_link_are_byte_identical_across_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    synth(&a, &[]);
    synth(&b, &[]);
    assert_eq!(read_dir_bytes(&a.join("detections")), read_dir_bytes(&b.join("detections")));
    let (ta, tb) = (tmp.path().join("ta"), tmp.path().join("tb"));
    let det = a.join("detections");
    assert_eq!(run(&["--workers", "1", "link", "--detections", s(&det), "--out", s(&ta)]), 0);
    assert_eq!(run(&["--workers", "3", "link", "--detections", s(&det), "--out", s(&tb)]), 0);
    assert_eq!(read_dir_bytes(&ta), read_dir_bytes(&tb));
}

#[test]
fn pipeline_runs_end_to_end() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path().join("d");
    synth(&d, &[]);
    let det = d.join("detections");
    let tubes = tmp.path().join("tubes");
    assert_eq!(run(&["link", "--detections", s(&det), "--out", s(&tubes)]), 0);
    let masks = tmp.path().join("masks");
    assert_eq!(run(&["mask", "--detections", s(&det), "--tubes", s(&tubes), "--out", s(&masks), "--mode", "mask_background"]), 0);
    assert!(masks.join("motion_00_000.mask.json").is_file());

    let (train_m, test_m, tax) = (d.join("train_manifest.csv"), d.join("test_manifest.csv"), d.join("taxonomy.json"));
    let model = tmp.path().join("m.ckpt");
    let data = ["--detections", s(&det), "--tubes", s(&tubes), "--taxonomy", s(&tax)];
    let mut train = vec!["train", "--manifest", s(&train_m), "--out", s(&model), "-T", "16", "--seed", "1", "--epochs", "20"];
    train.extend_from_slice(&data);
    assert_eq!(run(&train), 0);
    assert!(Path::new(&format!("{}.sidecar.json", s(&model))).is_file());

    let preds = tmp.path().join("p.jsonl");
    let mut predict = vec!["predict", "--manifest", s(&test_m), "--model", s(&model), "--out", s(&preds)];
    predict.extend_from_slice(&data);
    assert_eq!(run(&predict), 0);

    let report = tmp.path().join("r.json");
    let table = tmp.path().join("r.txt");
    assert_eq!(
        run(&["eval", "--predictions", s(&preds), "--manifest", s(&test_m), "--taxonomy", s(&tax), "--out", s(&report), "--table", s(&table)]),
        0
    );
    let r = load_report(&report).unwrap();
    assert_eq!(r.videos_per_class, vec![4; 5]);
    assert!(r.mean_top1.unwrap() > 0.5, "{:?}", r.mean_top1);

    let merged = tmp.path().join("merged.txt");
    let arg = format!("sipnet={}", s(&report));
    assert_eq!(run(&["report", "--report", &arg, "--out", s(&merged)]), 0);
    assert!(fs::read_to_string(&merged).unwrap().contains("sipnet"));

    let sweep = tmp.path().join("sweep.csv");
    assert_eq!(
        run(&["sweep", "--detections", s(&det), "--tubes", s(&tubes), "--train-manifest", s(&train_m), "--test-manifest", s(&test_m), "--taxonomy", s(&tax), "--t-values", "1,16", "--seed", "1", "--epochs", "5", "--out", s(&sweep)]),
        0
    );
    let csv = fs::read_to_string(&sweep).unwrap();
    assert!(csv.starts_with("T,mean_accuracy,global_top1,clip_multiply_adds,epochs_run"));
    assert_eq!(csv.lines().count(), 3);
}

#[test]
fn perfect_predictions_score_100() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path().join("d");
    synth(&d, &[]);
    let test_m = d.join("test_manifest.csv");
    let mut lines = String::new();
    let mut rdr = csv::Reader::from_path(&test_m).unwrap();
    let headers = rdr.headers().unwrap().clone();
    let (vi, li) = (
        headers.iter().position(|h| h == "video_id").unwrap(),
        headers.iter().position(|h| h == "label").unwrap(),
    );
    for rec in rdr.records() {
        let rec = rec.unwrap();
        let label: usize = rec[li].trim_start_matches("motion_").parse().unwrap();
        let mut probs = vec![0.0; 5];
        probs[label] = 1.0;
        lines += &serde_json::json!({"video_id": &rec[vi], "probs": probs}).to_string();
        lines.push('\n');
    }
    let preds = tmp.path().join("p.jsonl");
    fs::write(&preds, lines).unwrap();
    let report = tmp.path().join("r.json");
    let table = tmp.path().join("t.txt");
    assert_eq!(
        run(&["eval", "--predictions", s(&preds), "--manifest", s(&test_m), "--taxonomy", s(&d.join("taxonomy.json")), "--out", s(&report), "--table", s(&table)]),
        0
    );
    let r = load_report(&report).unwrap();
    assert_eq!(r.mean_top1, Some(1.0));
    assert_eq!(r.map, Some(1.0));
    assert!(fs::read_to_string(&table).unwrap().contains("100.0"));
}

#[test]
fn diverging_training_exits_with_3() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path().join("d");
    synth(&d, &[]);
    let det = d.join("detections");
    let tubes = tmp.path().join("tubes");
    assert_eq!(run(&["link", "--detections", s(&det), "--out", s(&tubes)]), 0);
    let code = run(&[
        "train", "--detections", s(&det), "--tubes", s(&tubes),
        "--manifest", s(&d.join("train_manifest.csv")), "--taxonomy", s(&d.join("taxonomy.json")),
        "--out", s(&tmp.path().join("m.ckpt")), "-T", "8", "--seed", "1", "--epochs", "5",
        "--learning-rate", "1e300",
    ]);
    assert_eq!(code, 3);
}
