use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

use sceneseg::annotation_io::{
    load_frame_outputs, parse_annotations, parse_predictions, parse_shots, serialize_annotations,
    serialize_predictions, serialize_shots, ShotBoundarySet, SCHEMA_VERSION,
};
use sceneseg::decode::{decode_video, DecodeConfig};
use sceneseg::metrics::{evaluate, F1Strategy};
use sceneseg::synth::perturb_boundaries;
use sceneseg::{PredictedSceneSet, Taxonomy};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_sceneseg"))
}

fn run(args: &[&str]) -> Output {
    bin()
        .args(args)
        .env_remove("SCENESEG_DEFAULTS")
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn synth(dir: &Path, extra: &[&str]) {
    let mut args = vec!["synth", "--out", p(dir)];
    args.extend_from_slice(extra);
    if !extra.contains(&"--num-videos") {
        args.extend(["--num-videos", "12"]);
    }
    let o = run(&args);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_slice(&fs::read(path).unwrap()).unwrap()
}

#[test]
fn help_lists_every_flag() {
    let cases: &[(&str, &[&str])] = &[
        (
            "evaluate",
            &["--gt", "--pred", "--taxonomy", "--out", "--f1-strategy"],
        ),
        (
            "decode",
            &["--outputs-dir", "--thr", "--nms-window", "--mode", "--out"],
        ),
        (
            "validate",
            &["--ann", "--taxonomy", "--shots", "--snap-eps", "--out"],
        ),
        ("stats", &["--ann", "--taxonomy", "--out"]),
        (
            "synth",
            &[
                "--out",
                "--params",
                "--seed",
                "--num-videos",
                "--feature-noise",
                "--label-noise",
            ],
        ),
        (
            "model-demo",
            &[
                "--config",
                "--weights",
                "--features-dir",
                "--ann",
                "--taxonomy",
                "--thr",
                "--nms-window",
                "--mode",
                "--out",
            ],
        ),
    ];
    for (cmd, flags) in cases {
        let o = run(&[cmd, "--help"]);
        assert_eq!(code(&o), 0);
        let text = stdout(&o);
        for f in flags.iter().chain(&["--defaults", "--threads"]) {
            assert!(text.contains(f), "{cmd} --help misses {f}");
        }
    }
}

#[test]
fn unknown_flags_and_missing_files_exit_2() {
    assert_eq!(code(&run(&["evaluate", "--bogus"])), 2);
    assert_eq!(code(&run(&["frobnicate"])), 2);
    assert_eq!(
        code(&run(&["stats", "--ann", "/nonexistent/annotations.json"])),
        2
    );
    assert_eq!(
        code(&run(&[
            "decode",
            "--mode",
            "sideways",
            "--outputs-dir",
            ".",
            "--out",
            "x"
        ])),
        2
    );
}

#[test]
fn ground_truth_as_predictions_scores_one() {
    let dir = TempDir::new().unwrap();
    synth(dir.path(), &[]);
    let split = parse_annotations(&fs::read(dir.path().join("annotations.json")).unwrap()).unwrap();
    let preds: Vec<_> = split
        .annotations
        .iter()
        .map(PredictedSceneSet::from_annotation)
        .collect();
    let pred = dir.path().join("gt_pred.json");
    fs::write(&pred, serialize_predictions(&preds)).unwrap();
    let out = dir.path().join("report");
    let o = run(&[
        "evaluate",
        "--gt",
        p(&dir.path().join("annotations.json")),
        "--pred",
        p(&pred),
        "--out",
        p(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).contains("Avg_mAP  1.0000"));
    let r = json(&out.join("report.json"));
    assert_eq!(r["avg_map"], 1.0);
    assert_eq!(r["avg_f1"], 1.0);
    assert_eq!(r["schema_version"], SCHEMA_VERSION);
    let csv = fs::read_to_string(out.join("report.csv")).unwrap();
    assert!(csv.contains("summary,all,avg_map,1\n"));
}

#[test]
fn empty_prediction_file_scores_zero() {
    let dir = TempDir::new().unwrap();
    synth(dir.path(), &[]);
    let gt = dir.path().join("annotations.json");
    for (name, body) in [("blank.json", ""), ("none.json", "{\"videos\": []}")] {
        let pred = dir.path().join(name);
        fs::write(&pred, body).unwrap();
        let out = dir.path().join(name.replace(".json", ""));
        let o = run(&[
            "evaluate",
            "--gt",
            p(&gt),
            "--pred",
            p(&pred),
            "--out",
            p(&out),
        ]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        assert_eq!(json(&out.join("report.json"))["avg_map"], 0.0);
    }
}

#[test]
fn report_matches_library_evaluation() {
    let dir = TempDir::new().unwrap();
    synth(dir.path(), &[]);
    let gt_path = dir.path().join("annotations.json");
    let gt = parse_annotations(&fs::read(&gt_path).unwrap()).unwrap();
    let tax = Taxonomy::bundled();
    let preds = perturb_boundaries(&gt, 0.3, 11).unwrap();
    let pred_path = dir.path().join("pred.json");
    fs::write(&pred_path, serialize_predictions(&preds)).unwrap();
    // The library sees the same bytes the binary reads.
    let parsed = parse_predictions(&fs::read(&pred_path).unwrap(), &tax).unwrap();
    for (flag, strategy) in [
        ("sequential", F1Strategy::Sequential),
        ("nearest-pair-first", F1Strategy::NearestPairFirst),
    ] {
        let out = dir.path().join(flag);
        let o = run(&[
            "evaluate",
            "--gt",
            p(&gt_path),
            "--pred",
            p(&pred_path),
            "--f1-strategy",
            flag,
            "--out",
            p(&out),
        ]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        let want = evaluate(&gt, &parsed, &tax, strategy).unwrap();
        assert_eq!(
            fs::read_to_string(out.join("report.json")).unwrap(),
            want.to_json()
        );
        assert_eq!(
            fs::read_to_string(out.join("report.csv")).unwrap(),
            want.to_csv()
        );
        assert_eq!(stdout(&o), want.to_pretty());
    }
}

#[test]
fn overlapping_predictions_exit_1_naming_the_video() {
    let dir = TempDir::new().unwrap();
    synth(dir.path(), &[]);
    let gt = dir.path().join("annotations.json");
    let pred = dir.path().join("pred.json");
    fs::write(
        &pred,
        r#"{"videos": [{"video_id": "syn00003", "segments": [
            {"start": 0.0, "end": 5.0, "scores": {"1": 0.9}},
            {"start": 4.0, "end": 9.0, "scores": {"2": 0.8}}]}]}"#,
    )
    .unwrap();
    let o = run(&["evaluate", "--gt", p(&gt), "--pred", p(&pred)]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("syn00003"), "{}", stderr(&o));
}

#[test]
fn decode_matches_library_and_modes_agree_without_noise() {
    let dir = TempDir::new().unwrap();
    let params = dir.path().join("noiseless.toml");
    fs::write(
        &params,
        "feature_noise = 0.0\nlabel_noise = 0.0\nboundary_blur_s = 0.0\n",
    )
    .unwrap();
    synth(dir.path(), &["--params", p(&params)]);
    let outputs = dir.path().join("outputs");
    let (b, f) = (dir.path().join("b.json"), dir.path().join("f.json"));
    assert_eq!(
        code(&run(&[
            "decode",
            "--outputs-dir",
            p(&outputs),
            "--out",
            p(&b)
        ])),
        0
    );
    let o = run(&[
        "decode",
        "--outputs-dir",
        p(&outputs),
        "--mode",
        "framewise",
        "--out",
        p(&f),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));

    let tax = Taxonomy::bundled();
    let bp = parse_predictions(&fs::read(&b).unwrap(), &tax).unwrap();
    let fp = parse_predictions(&fs::read(&f).unwrap(), &tax).unwrap();
    assert_eq!(bp.len(), 12);
    for (x, y) in bp.iter().zip(&fp) {
        assert_eq!(x.video_id, y.video_id);
        assert_eq!(x.segments.len(), y.segments.len());
    }
    let want: Vec<_> = bp
        .iter()
        .map(|pr| {
            let out = load_frame_outputs(outputs.join(format!("{}.bin", pr.video_id))).unwrap();
            decode_video(&out, &DecodeConfig::default(), &pr.video_id).unwrap()
        })
        .collect();
    assert_eq!(
        fs::read_to_string(&b).unwrap(),
        serialize_predictions(&want)
    );
}

#[test]
fn malformed_container_exits_2() {
    let dir = TempDir::new().unwrap();
    let outputs = dir.path().join("outputs");
    fs::create_dir(&outputs).unwrap();
    fs::write(outputs.join("broken.bin"), b"SSEG\x01\x00\x00\x00garbage").unwrap();
    let o = run(&[
        "decode",
        "--outputs-dir",
        p(&outputs),
        "--out",
        p(&dir.path().join("x.json")),
    ]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("broken.bin"));
}

#[test]
fn validate_clean_and_gapped_corpora() {
    let dir = TempDir::new().unwrap();
    synth(dir.path(), &[]);
    let ann = dir.path().join("annotations.json");
    let o = run(&["validate", "--ann", p(&ann)]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).starts_with("0 violations"));

    // Open a gap by pulling the end of the first multi-scene video's first scene back.
    let mut doc = json(&ann);
    let video = doc["videos"]
        .as_array_mut()
        .unwrap()
        .iter_mut()
        .find(|v| v["scenes"].as_array().unwrap().len() > 1)
        .unwrap();
    let id = video["video_id"].as_str().unwrap().to_string();
    let end = video["scenes"][0]["end"].as_f64().unwrap();
    video["scenes"][0]["end"] = serde_json::json!(end - 0.5);
    let bad = dir.path().join("gapped.json");
    fs::write(&bad, serde_json::to_vec(&doc).unwrap()).unwrap();
    let report = dir.path().join("lint.json");
    let o = run(&["validate", "--ann", p(&bad), "--out", p(&report)]);
    assert_eq!(code(&o), 1);
    let text = stdout(&o);
    assert!(text.contains(&format!("{id}: gap after scene 0")), "{text}");
    assert!(text.contains("1 violations"));
    let r = json(&report);
    assert_eq!(r["schema_version"], SCHEMA_VERSION);
    assert_eq!(r["num_violations"], 1);
    assert_eq!(r["videos"][0]["violations"][0]["kind"], "gap");
}

#[test]
fn snap_preview_lists_boundaries_near_shot_cuts() {
    let dir = TempDir::new().unwrap();
    synth(dir.path(), &[]);
    let ann_path = dir.path().join("annotations.json");
    let before = fs::read(&ann_path).unwrap();
    let split = parse_annotations(&before).unwrap();
    // Every scene cut gets a shot cut at a known offset; count those in (0, eps].
    // No offset sits exactly on eps, where float rounding decides.
    let offsets = [0.0, 0.04, -0.08, 0.09, 0.11, -0.3, 0.07];
    let mut applied = Vec::new();
    let shots: Vec<ShotBoundarySet> = split
        .annotations
        .iter()
        .map(|a| {
            let boundaries = a
                .internal_boundaries()
                .iter()
                .map(|&b| {
                    let d: f64 = offsets[applied.len() % offsets.len()];
                    applied.push(d);
                    ((b + d) * 1000.0).round() / 1000.0
                })
                .collect();
            ShotBoundarySet {
                video_id: a.video_id.clone(),
                boundaries,
            }
        })
        .collect();
    let within = |eps: f64| {
        applied
            .iter()
            .filter(|d| **d != 0.0 && d.abs() <= eps)
            .count()
    };
    let expected = within(0.1);
    assert!(expected > 0);
    let shots_path = dir.path().join("shots_offset.json");
    fs::write(&shots_path, serialize_shots(&shots)).unwrap();
    assert_eq!(parse_shots(&fs::read(&shots_path).unwrap()).unwrap(), shots);
    let report = dir.path().join("lint.json");
    let o = run(&[
        "validate",
        "--ann",
        p(&ann_path),
        "--shots",
        p(&shots_path),
        "--out",
        p(&report),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(
        stdout(&o).contains(&format!("{expected} boundaries would move")),
        "{}",
        stdout(&o)
    );
    let r = json(&report);
    let moves = r["snap_preview"]["moves"].as_array().unwrap();
    assert_eq!(moves.len(), expected);
    for m in moves {
        let d = m["to_s"].as_f64().unwrap() - m["from_s"].as_f64().unwrap();
        assert!(d.abs() <= 0.1 + 1e-9);
    }
    // Preview only.
    assert_eq!(fs::read(&ann_path).unwrap(), before);

    // A wider radius picks up the 0.11 s offsets too.
    let o = run(&[
        "validate",
        "--ann",
        p(&ann_path),
        "--shots",
        p(&shots_path),
        "--snap-eps",
        "0.2",
    ]);
    assert!(within(0.2) > expected);
    assert!(stdout(&o).contains(&format!("{} boundaries would move", within(0.2))));
}

#[test]
fn stats_reports_carry_schema_version() {
    let dir = TempDir::new().unwrap();
    synth(dir.path(), &[]);
    let out = dir.path().join("stats");
    let o = run(&[
        "stats",
        "--ann",
        p(&dir.path().join("annotations.json")),
        "--out",
        p(&out),
    ]);
    assert_eq!(code(&o), 0);
    let r = json(&out.join("stats.json"));
    assert_eq!(r["schema_version"], SCHEMA_VERSION);
    assert_eq!(r["num_videos"], 12);
    assert_eq!(r["mean_labels_per_scene"], 6.0);
    let csv = fs::read_to_string(out.join("stats.csv")).unwrap();
    assert!(csv.starts_with(&format!(
        "section,key,value\nsummary,schema_version,{SCHEMA_VERSION}\n"
    )));
}

fn tree(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let path = e.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.push((
                    path.strip_prefix(dir).unwrap().to_path_buf(),
                    fs::read(&path).unwrap(),
                ));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn synth_is_byte_identical_per_seed_and_thread_count() {
    let dir = TempDir::new().unwrap();
    let (a, b, c) = (
        dir.path().join("a"),
        dir.path().join("b"),
        dir.path().join("c"),
    );
    synth(&a, &["--seed", "3"]);
    let o = bin()
        .args(["synth", "--out", p(&b), "--num-videos", "12", "--seed", "3"])
        .env("SCENESEG_THREADS", "1")
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    synth(&c, &["--seed", "4"]);
    let ta = tree(&a);
    assert_eq!(ta.len(), 2 + 1 + 12 * 4);
    assert_eq!(ta, tree(&b));
    assert_ne!(ta, tree(&c));
    // The annotations document is the library's serialization.
    let split = parse_annotations(&fs::read(a.join("annotations.json")).unwrap()).unwrap();
    assert_eq!(
        fs::read_to_string(a.join("annotations.json")).unwrap(),
        serialize_annotations(&split)
    );
}

#[test]
fn defaults_file_supplies_flags() {
    let dir = TempDir::new().unwrap();
    synth(dir.path(), &[]);
    let outputs = dir.path().join("outputs");
    let cfg = dir.path().join("defaults.toml");
    // One suppression window covers every video.
    fs::write(&cfg, "nms_window = 1000.0\n").unwrap();
    let out = dir.path().join("p.json");
    let o = bin()
        .args([
            "--defaults",
            p(&cfg),
            "decode",
            "--outputs-dir",
            p(&outputs),
            "--out",
            p(&out),
        ])
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let preds = parse_predictions(&fs::read(&out).unwrap(), &Taxonomy::bundled()).unwrap();
    assert!(preds.iter().all(|p| p.segments.len() <= 2));
    // Explicit flags win.
    let o = bin()
        .args([
            "--defaults",
            p(&cfg),
            "decode",
            "--nms-window",
            "1",
            "--outputs-dir",
            p(&outputs),
            "--out",
            p(&out),
        ])
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    let preds = parse_predictions(&fs::read(&out).unwrap(), &Taxonomy::bundled()).unwrap();
    assert!(preds.iter().any(|p| p.segments.len() > 2));

    fs::write(&cfg, "thresh = 0.5\n").unwrap();
    let o = bin()
        .args([
            "--defaults",
            p(&cfg),
            "decode",
            "--outputs-dir",
            p(&outputs),
            "--out",
            p(&out),
        ])
        .output()
        .unwrap();
    assert_eq!(code(&o), 2);
}

#[test]
fn model_demo_runs_and_reloads_weights() {
    let dir = TempDir::new().unwrap();
    synth(dir.path(), &["--num-videos", "6"]);
    let cfg = dir.path().join("demo.toml");
    fs::write(
        &cfg,
        "[model]\nstages = 1\nlayers = 2\nchannels = 8\n\n[fit]\niterations = 20\n",
    )
    .unwrap();
    let features = dir.path().join("features");
    let ann = dir.path().join("annotations.json");
    let out = dir.path().join("demo");
    let o = run(&[
        "model-demo",
        "--config",
        p(&cfg),
        "--features-dir",
        p(&features),
        "--ann",
        p(&ann),
        "--out",
        p(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    for f in [
        "predictions.json",
        "report.json",
        "report.csv",
        "fit.json",
        "weights/manifest.json",
    ] {
        assert!(out.join(f).exists(), "missing {f}");
    }
    assert_eq!(fs::read_dir(out.join("outputs")).unwrap().count(), 6);
    let fit = json(&out.join("fit.json"));
    assert_eq!(fit["schema_version"], SCHEMA_VERSION);
    assert_eq!(fit["stages"].as_array().unwrap().len(), 1);
    let before = fit["stages"][0]["boundary"]["loss_before"]
        .as_f64()
        .unwrap();
    let after = fit["stages"][0]["boundary"]["loss_after"].as_f64().unwrap();
    assert!(after < before);

    // Saved weights drive a second run without annotations.
    let again = dir.path().join("again");
    let o = run(&[
        "model-demo",
        "--weights",
        p(&out.join("weights")),
        "--features-dir",
        p(&features),
        "--out",
        p(&again),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let preds = parse_predictions(
        &fs::read(again.join("predictions.json")).unwrap(),
        &Taxonomy::bundled(),
    )
    .unwrap();
    assert_eq!(preds.len(), 6);
    assert!(!again.join("report.json").exists());

    // A model table next to --weights is ambiguous.
    let o = run(&[
        "model-demo",
        "--config",
        p(&cfg),
        "--weights",
        p(&out.join("weights")),
        "--features-dir",
        p(&features),
        "--out",
        p(&again),
    ]);
    assert_eq!(code(&o), 2);
    // So are weights for a different class count.
    let tax = dir.path().join("tax.json");
    fs::write(&tax, Taxonomy::flat(5).to_json()).unwrap();
    let o = run(&[
        "model-demo",
        "--weights",
        p(&out.join("weights")),
        "--taxonomy",
        p(&tax),
        "--features-dir",
        p(&features),
        "--out",
        p(&again),
    ]);
    assert_eq!(code(&o), 2);
}
