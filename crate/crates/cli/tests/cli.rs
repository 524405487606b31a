use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use geovl::data_engine::{CocoDataset, DetectionRecord, GroundingRecord, SourceRecord};
use geovl::geometry::{HBox, LabeledDetection, QuadBox};
use geovl::metrics::{ap_nc, ApNcProtocol, ImageDetections};
use geovl::resolution::ImageGeometry;
use serde_json::{json, Value};
use tempfile::TempDir;

fn geovl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_geovl"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = geovl(args);
    assert!(
        out.status.success(),
        "geovl {args:?} failed ({:?}):\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn square(cat: &str, x: f64, y: f64, s: f64) -> LabeledDetection {
    LabeledDetection::new(cat, QuadBox::from_coords([x, y, x + s, y, x + s, y + s, x, y + s]))
}

fn detection_records() -> Vec<DetectionRecord> {
    (0..4)
        .map(|i| DetectionRecord {
            image: format!("img{i}.png"),
            geometry: ImageGeometry::new(600, 800).unwrap(),
            annotations: (0..3 + i)
                .map(|k| {
                    square(
                        ["ship", "plane"][k % 2],
                        20.0 + 90.0 * k as f64,
                        40.0 + 10.0 * i as f64,
                        50.0,
                    )
                })
                .collect(),
        })
        .collect()
}

fn write_lines<T: serde::Serialize>(path: &Path, items: &[T]) {
    let text: String = items.iter().map(|v| serde_json::to_string(v).unwrap() + "\n").collect();
    std::fs::write(path, text).unwrap();
}

fn write_source_records(dir: &Path) -> PathBuf {
    let path = dir.join("dets.jsonl");
    let recs: Vec<SourceRecord> = detection_records().into_iter().map(SourceRecord::Detection).collect();
    write_lines(&path, &recs);
    path
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn coco_round_trip_is_byte_stable() {
    let dir = TempDir::new().unwrap();
    let coco = dir.path().join("in.json");
    std::fs::write(
        &coco,
        serde_json::to_string_pretty(&CocoDataset::from_records(&detection_records())).unwrap(),
    )
    .unwrap();
    let recs = dir.path().join("recs.jsonl");
    let back = dir.path().join("out.json");
    let again = dir.path().join("again.json");
    ok(&[
        "convert",
        "--from",
        "coco",
        "--to",
        "records",
        "--input",
        p(&coco),
        "--output",
        p(&recs),
    ]);
    ok(&[
        "convert",
        "--from",
        "records",
        "--to",
        "coco",
        "--input",
        p(&recs),
        "--output",
        p(&back),
    ]);
    let recs2 = dir.path().join("recs2.jsonl");
    ok(&[
        "convert",
        "--from",
        "coco",
        "--to",
        "records",
        "--input",
        p(&back),
        "--output",
        p(&recs2),
    ]);
    ok(&[
        "convert",
        "--from",
        "records",
        "--to",
        "coco",
        "--input",
        p(&recs2),
        "--output",
        p(&again),
    ]);
    assert_eq!(std::fs::read(&back).unwrap(), std::fs::read(&again).unwrap());
    assert_eq!(std::fs::read(&recs).unwrap(), std::fs::read(&recs2).unwrap());
    assert_eq!(read_json(&back)["images"].as_array().unwrap().len(), 4);
}

#[test]
fn convert_strips_descriptors_and_cleans() {
    let dir = TempDir::new().unwrap();
    let input = dir.path().join("g.jsonl");
    let rec = SourceRecord::Grounding(GroundingRecord {
        image: "a.png".into(),
        geometry: ImageGeometry::new(100, 100).unwrap(),
        expression: "[refer]  teh white plane!!".into(),
        target: HBox::new(1.0, 1.0, 30.0, 30.0).unwrap(),
    });
    write_lines(&input, &[rec]);
    let typos = dir.path().join("typos.json");
    std::fs::write(&typos, r#"{"teh": "the"}"#).unwrap();
    let output = dir.path().join("out.jsonl");
    ok(&[
        "convert",
        "--from",
        "records",
        "--to",
        "records",
        "--input",
        p(&input),
        "--output",
        p(&output),
        "--strip-descriptors",
        "--clean",
        "--typos",
        p(&typos),
    ]);
    let line: Value = serde_json::from_str(std::fs::read_to_string(&output).unwrap().trim()).unwrap();
    assert_eq!(
        line["expression"],
        "Output the bounding box of the object described as follows: the white plane!"
    );
}

#[test]
fn malformed_input_exits_with_data_error() {
    let dir = TempDir::new().unwrap();
    let input = dir.path().join("bad.jsonl");
    std::fs::write(&input, "{\"kind\": \"detection\", \"image\": 3}\nnot json\n").unwrap();
    let output = dir.path().join("out.jsonl");
    let out = geovl(&[
        "convert",
        "--from",
        "records",
        "--to",
        "records",
        "--input",
        p(&input),
        "--output",
        p(&output),
        "--strict",
    ]);
    assert_eq!(out.status.code(), Some(2));
    let missing = geovl(&[
        "convert",
        "--from",
        "records",
        "--to",
        "records",
        "--input",
        "/nonexistent/x.jsonl",
        "--output",
        p(&output),
    ]);
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn usage_errors_exit_one() {
    let out = geovl(&["sample", "--config", "x.toml", "-n", "3", "--output", "o.jsonl"]);
    assert_eq!(out.status.code(), Some(1));
    let out = geovl(&["eval", "--kind", "detection", "--preds", "a", "--gts", "b"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(geovl(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(geovl(&["--help"]).status.code(), Some(0));
}

fn sample_config(dir: &Path) -> PathBuf {
    let dets = write_source_records(dir);
    let ground = dir.join("ground.jsonl");
    let recs: Vec<SourceRecord> = (0..5)
        .map(|i| {
            SourceRecord::Grounding(GroundingRecord {
                image: format!("g{i}.png"),
                geometry: ImageGeometry::new(500, 700).unwrap(),
                expression: "the small ship near the dock".into(),
                target: HBox::new(10.0, 20.0, 110.0, 90.0).unwrap(),
            })
        })
        .collect();
    write_lines(&ground, &recs);
    let cfg = dir.join("run.toml");
    std::fs::write(
        &cfg,
        format!(
            "[[subsets]]\nname = \"det\"\ntask = \"detection\"\nweight = 1.0\npath = \"{}\"\n\n\
             [[subsets]]\nname = \"ground\"\ntask = \"grounding\"\nweight = 3.0\npath = \"{}\"\n",
            dets.file_name().unwrap().to_str().unwrap(),
            ground.file_name().unwrap().to_str().unwrap()
        ),
    )
    .unwrap();
    cfg
}

#[test]
fn sample_is_reproducible_and_independent_of_jobs() {
    let dir = TempDir::new().unwrap();
    let cfg = sample_config(dir.path());
    let run = |name: &str, jobs: &str| {
        let out = dir.path().join(name);
        ok(&[
            "sample",
            "--config",
            p(&cfg),
            "--seed",
            "42",
            "-n",
            "300",
            "--jobs",
            jobs,
            "--output",
            p(&out),
        ]);
        std::fs::read(&out).unwrap()
    };
    let a = run("a.jsonl", "1");
    assert_eq!(a, run("b.jsonl", "1"));
    assert_eq!(a, run("c.jsonl", "4"));
    assert_eq!(String::from_utf8(a).unwrap().lines().count(), 300);
    let manifest = read_json(&dir.path().join("a.jsonl.manifest.json"));
    assert_eq!(manifest["seed"], 42);
    assert_eq!(manifest["config_hash"].as_str().unwrap().len(), 64);
    assert_eq!(
        read_json(&dir.path().join("c.jsonl.manifest.json"))["config_hash"],
        manifest["config_hash"]
    );

    let empty = dir.path().join("empty.jsonl");
    ok(&[
        "sample",
        "--config",
        p(&cfg),
        "--seed",
        "1",
        "-n",
        "0",
        "--output",
        p(&empty),
    ]);
    assert_eq!(std::fs::read(&empty).unwrap().len(), 0);
}

fn detection_preds(dir: &Path, recs: &[DetectionRecord]) -> PathBuf {
    let path = dir.join("preds.jsonl");
    let lines: Vec<Value> = recs
        .iter()
        .map(|r| {
            let dets: Vec<Value> = r
                .annotations
                .iter()
                .enumerate()
                .map(|(k, d)| json!({"label": d.category, "poly": d.quad, "score": 0.9 - 0.1 * k as f64}))
                .collect();
            json!({"image": r.image, "detections": dets})
        })
        .collect();
    write_lines(&path, &lines);
    path
}

#[test]
fn eval_detection_matches_library() {
    let dir = TempDir::new().unwrap();
    let gts = write_source_records(dir.path());
    let recs = detection_records();
    let mut shifted = recs.clone();
    for r in &mut shifted {
        r.annotations.pop();
        r.annotations.push(square("ship", 700.0, 500.0, 30.0));
    }
    let preds = detection_preds(dir.path(), &shifted);
    let report_path = dir.path().join("report.json");
    let csv_path = dir.path().join("report.csv");
    ok(&[
        "eval",
        "--kind",
        "detection",
        "--preds",
        p(&preds),
        "--gts",
        p(&gts),
        "--seed",
        "3",
        "--sweep",
        "--output",
        p(&report_path),
        "--csv",
        p(&csv_path),
    ]);
    let report = read_json(&report_path);

    let gt_map: ImageDetections = recs.iter().map(|r| (r.image.clone(), r.annotations.clone())).collect();
    let pred_map: ImageDetections = shifted
        .iter()
        .map(|r| (r.image.clone(), r.annotations.clone()))
        .collect();
    let lib = ap_nc(
        &pred_map,
        &gt_map,
        &ApNcProtocol {
            seed: 3,
            ..ApNcProtocol::default()
        },
    )
    .unwrap();
    assert_eq!(report["ap_nc"], serde_json::to_value(&lib).unwrap());
    assert!(report["sweep"]["best_threshold"].is_number());
    assert!(std::fs::read_to_string(&csv_path).unwrap().starts_with("class,n_gt"));

    let perfect = detection_preds(dir.path(), &recs);
    let out = ok(&[
        "eval",
        "--kind",
        "detection",
        "--preds",
        p(&perfect),
        "--gts",
        p(&gts),
        "--seed",
        "0",
    ]);
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["ap_nc"]["ap_nc50"]["mean"], 1.0);
    assert_eq!(v["mf1"]["mean_f1"], 1.0);
}

#[test]
fn eval_detection_from_model_text() {
    let dir = TempDir::new().unwrap();
    let gts = write_source_records(dir.path());
    let preds = dir.path().join("text.jsonl");
    let lines: Vec<Value> = detection_records()
        .iter()
        .map(|r| {
            let dets = geovl::codec::canonical_response(&r.annotations);
            let text = geovl::codec::render_detections(&dets, geovl::codec::ResponseMode::Plain).unwrap();
            json!({"image": r.image, "response": text + "\nship: (1,2,3)"})
        })
        .collect();
    write_lines(&preds, &lines);
    let out = ok(&[
        "eval",
        "--kind",
        "detection",
        "--preds",
        p(&preds),
        "--gts",
        p(&gts),
        "--seed",
        "0",
    ]);
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["ap_nc"]["ap_nc50"]["mean"], 1.0);
    assert_eq!(v["parse_diagnostics"], 4);
}

#[test]
fn eval_grounding_and_vqa() {
    let dir = TempDir::new().unwrap();
    let gts = dir.path().join("gts.jsonl");
    write_lines(
        &gts,
        &[
            json!({"id": "a", "bbox": [0, 0, 2, 1]}),
            json!({"id": "b", "bbox": [10, 10, 20, 20]}),
        ],
    );
    let preds = dir.path().join("preds.jsonl");
    write_lines(
        &preds,
        &[
            json!({"id": "a", "response": "[0, 0, 1, 1]"}),
            json!({"id": "b", "response": "The box is [10, 10, 20, 21]."}),
        ],
    );
    let out = ok(&["eval", "--kind", "grounding", "--preds", p(&preds), "--gts", p(&gts)]);
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["acc_at_0_5"]["correct"], 1);
    assert_eq!(v["acc_at_0_5"]["total"], 2);

    let vgts = dir.path().join("vgts.jsonl");
    write_lines(
        &vgts,
        &[json!({"id": "q1", "answer": "B"}), json!({"id": "q2", "answer": "yes"})],
    );
    let vpreds = dir.path().join("vpreds.jsonl");
    write_lines(
        &vpreds,
        &[
            json!({"id": "q1", "answer": "The answer is B."}),
            json!({"id": "q2", "answer": "Yes"}),
        ],
    );
    let out = ok(&["eval", "--kind", "vqa", "--preds", p(&vpreds), "--gts", p(&vgts)]);
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["accuracy"]["correct"], 2);
}

#[test]
fn tile_split_and_merge() {
    let dir = TempDir::new().unwrap();
    let manifest = dir.path().join("images.jsonl");
    let annotations = vec![square("ship", 430.0, 40.0, 50.0), square("plane", 700.0, 800.0, 60.0)];
    write_lines(
        &manifest,
        &[json!({"image": "big.png", "height": 1024, "width": 1024, "annotations": annotations})],
    );
    let out_dir = dir.path().join("tiles");
    ok(&["tile", "--input", p(&manifest), "--output", p(&out_dir)]);
    let windows = std::fs::read_to_string(out_dir.join("windows.jsonl")).unwrap();
    let line: Value = serde_json::from_str(windows.trim()).unwrap();
    let wins = line["windows"].as_array().unwrap();
    assert_eq!(wins.len(), 9);
    let xs: std::collections::BTreeSet<u64> = wins.iter().map(|w| w["x0"].as_u64().unwrap()).collect();
    assert_eq!(xs.into_iter().collect::<Vec<_>>(), vec![0, 412, 512]);

    let merged = dir.path().join("merged.jsonl");
    ok(&[
        "tile",
        "--merge",
        "--input",
        p(&out_dir.join("shards.jsonl")),
        "--output",
        p(&merged),
    ]);
    let rec: DetectionRecord = serde_json::from_str(std::fs::read_to_string(&merged).unwrap().trim()).unwrap();
    assert_eq!(rec.annotations.len(), 2);
    let mut want = annotations.clone();
    want.sort_by(|a, b| a.category.cmp(&b.category));
    let mut got = rec.annotations.clone();
    got.sort_by(|a, b| a.category.cmp(&b.category));
    assert_eq!(got, want);
}

#[test]
fn tile_single_window_is_identity() {
    let dir = TempDir::new().unwrap();
    let manifest = dir.path().join("images.jsonl");
    let annotations = vec![square("ship", 10.0, 10.0, 20.0), square("ship", 12.0, 10.0, 20.0)];
    write_lines(
        &manifest,
        &[json!({"image": "small.png", "height": 300, "width": 400, "annotations": annotations})],
    );
    let out_dir = dir.path().join("tiles");
    ok(&["tile", "--input", p(&manifest), "--output", p(&out_dir)]);
    let merged = dir.path().join("merged.jsonl");
    ok(&[
        "tile",
        "--merge",
        "--input",
        p(&out_dir.join("shards.jsonl")),
        "--output",
        p(&merged),
    ]);
    let rec: DetectionRecord = serde_json::from_str(std::fs::read_to_string(&merged).unwrap().trim()).unwrap();
    assert_eq!(rec.annotations, annotations);
}

#[test]
fn zoomgen_is_reproducible() {
    let dir = TempDir::new().unwrap();
    let input = write_source_records(dir.path());
    let run = |name: &str, recipe: &str, jobs: &str| {
        let out = dir.path().join(name);
        ok(&[
            "zoomgen",
            "--input",
            p(&input),
            "--recipe",
            recipe,
            "--seed",
            "9",
            "--jobs",
            jobs,
            "--output",
            p(&out),
        ]);
        std::fs::read_to_string(&out).unwrap()
    };
    let a = run("a.jsonl", "mcq", "1");
    assert_eq!(a, run("b.jsonl", "mcq", "3"));
    for line in a.lines() {
        let v: Value = serde_json::from_str(line).unwrap();
        let trainable = v["messages"]
            .as_array()
            .unwrap()
            .iter()
            .filter(|m| m["trainable"] == true)
            .count();
        assert_eq!(trainable, 2);
    }
    let counting = run("c.jsonl", "counting", "2");
    assert_eq!(counting.lines().count(), a.lines().count());
    let manifest = read_json(&dir.path().join("a.jsonl.manifest.json"));
    assert_eq!(
        manifest["generation"]["produced"].as_u64().unwrap() as usize,
        a.lines().count()
    );

    let missing_seed = geovl(&[
        "zoomgen",
        "--input",
        p(&input),
        "--recipe",
        "counting",
        "--output",
        "x.jsonl",
    ]);
    assert_eq!(missing_seed.status.code(), Some(1));
}

#[test]
fn zoomgen_external_mcq_excludes_lines_without_distractors() {
    let dir = TempDir::new().unwrap();
    let input = dir.path().join("qa.jsonl");
    write_lines(
        &input,
        &[
            json!({"image": "x.png", "height": 2000, "width": 3000, "question": "What color is the roof?",
                   "answer": "red", "region": [100, 100, 400, 300], "distractors": ["blue", "green", "grey"]}),
            json!({"image": "x.png", "height": 2000, "width": 3000, "question": "Is the road paved?",
                   "answer": "yes", "region": [900, 100, 1400, 600]}),
        ],
    );
    let out = dir.path().join("z.jsonl");
    ok(&[
        "zoomgen",
        "--input",
        p(&input),
        "--recipe",
        "external",
        "--mcq",
        "--seed",
        "1",
        "--output",
        p(&out),
    ]);
    assert_eq!(std::fs::read_to_string(&out).unwrap().lines().count(), 1);
    let manifest = read_json(&dir.path().join("z.jsonl.manifest.json"));
    assert_eq!(manifest["exclusions"].as_array().unwrap().len(), 1);
}
