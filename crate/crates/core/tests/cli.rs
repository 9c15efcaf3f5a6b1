//! End-to-end checks of the command-line binary and its file formats.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

use motion_ae::cli::formats::{load_checkpoint, ClipRecord, DatasetFile, DatasetMeta, ScoreFile};
use motion_ae::eval::GroundTruthClip;
use motion_ae::pipeline::{frame_level_scores, BoundingBox, FrameRange};
use motion_ae::stack::{init_stack, StackConfig};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_motion-ae"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write(path: &Path, value: &Value) {
    std::fs::write(path, serde_json::to_string(value).unwrap()).unwrap();
}

fn read(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

/// A small scene: 4 objects over 400 frames.
fn small_synth(dir: &Path, seed: u64) -> PathBuf {
    let cfg = dir.join("synth.json");
    write(
        &cfg,
        &json!({"n_objects": 4, "frames": 400, "anomaly_fraction": 0.5}),
    );
    let out = dir.join(format!("data{seed}.json"));
    ok(&[
        "synth",
        "--config",
        s(&cfg),
        "--seed",
        &seed.to_string(),
        "--out",
        s(&out),
    ]);
    out
}

#[test]
fn synth_is_byte_identical_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    let c = dir.path().join("c.json");
    ok(&["synth", "--seed", "3", "--out", s(&a)]);
    ok(&["synth", "--seed", "3", "--out", s(&b)]);
    ok(&["synth", "--seed", "4", "--out", s(&c)]);
    let bytes = |p: &Path| std::fs::read(p).unwrap();
    assert_eq!(bytes(&a), bytes(&b));
    assert_ne!(bytes(&a), bytes(&c));
}

#[test]
fn synth_ground_truth_matches_regime_recount() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("d.json");
    ok(&["synth", "--out", s(&out)]);
    let v = read(&out);
    let trajs = v["trajectories"].as_array().unwrap();
    assert_eq!(trajs.len(), 20);
    let anomalous: Vec<&Value> = trajs
        .iter()
        .filter(|t| matches!(t["regime"].as_str(), Some("fast" | "turning")))
        .collect();
    let gts = v["ground_truth"].as_array().unwrap();
    assert_eq!(anomalous.len(), 5);
    assert_eq!(gts.len(), anomalous.len());
    for (t, g) in anomalous.iter().zip(gts) {
        let start = t["start_frame"].as_u64().unwrap();
        let len = t["boxes"].as_array().unwrap().len() as u64;
        assert_eq!(g["frames"]["start"].as_u64().unwrap(), start);
        assert_eq!(g["frames"]["end"].as_u64().unwrap(), start + len - 1);
    }
}

#[test]
fn synth_without_anomalies_has_empty_ground_truth() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    write(&cfg, &json!({"anomaly_fraction": 0.0}));
    let out = dir.path().join("d.json");
    ok(&["synth", "--config", s(&cfg), "--out", s(&out)]);
    assert!(read(&out)["ground_truth"].as_array().unwrap().is_empty());
}

#[test]
fn invalid_config_fails_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    write(
        &cfg,
        &json!({"regime_mix": {"waiting": 0.5, "slow": 0.5, "fast": 0.5, "turning": 0.0}}),
    );
    let out = dir.path().join("d.json");
    let r = run(&["synth", "--config", s(&cfg), "--out", s(&out)]);
    assert!(!r.status.success());
    assert!(String::from_utf8_lossy(&r.stderr).contains("sum to 1"));
    assert!(!out.exists());

    write(&cfg, &json!({"no_such_field": 1}));
    let r = run(&["synth", "--config", s(&cfg), "--out", s(&out)]);
    assert!(!r.status.success());
    assert!(!out.exists());
}

#[test]
fn train_reports_epochs_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_synth(dir.path(), 0);
    let cfg = dir.path().join("stack.json");
    write(&cfg, &json!({"epochs_offline": 2}));
    let m1 = dir.path().join("m1.json");
    let m2 = dir.path().join("m2.json");
    let out = ok(&[
        "train",
        "--data",
        s(&data),
        "--config",
        s(&cfg),
        "--max-sequences",
        "60",
        "--out",
        s(&m1),
    ]);
    ok(&[
        "train",
        "--data",
        s(&data),
        "--config",
        s(&cfg),
        "--max-sequences",
        "60",
        "--out",
        s(&m2),
    ]);
    assert_eq!(std::fs::read(&m1).unwrap(), std::fs::read(&m2).unwrap());
    let log = String::from_utf8(out.stdout).unwrap();
    for layer in 0..3 {
        for epoch in 1..=2 {
            assert!(
                log.contains(&format!("layer {layer} epoch {epoch} loss")),
                "{log}"
            );
        }
    }
}

#[test]
fn zero_epochs_checkpoint_is_the_initial_stack() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_synth(dir.path(), 0);
    let cfg = dir.path().join("stack.json");
    write(&cfg, &json!({"epochs_offline": 0, "seed": 9}));
    let m = dir.path().join("m.json");
    ok(&[
        "train",
        "--data",
        s(&data),
        "--config",
        s(&cfg),
        "--out",
        s(&m),
    ]);
    let expected = init_stack(&StackConfig {
        epochs_offline: 0,
        seed: 9,
        ..Default::default()
    })
    .unwrap();
    assert_eq!(load_checkpoint(&m).unwrap(), expected);
}

#[test]
fn train_errors_name_the_problem() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_synth(dir.path(), 0);
    let cfg = dir.path().join("stack.json");
    write(&cfg, &json!({"input_dim": 32}));
    let m = dir.path().join("m.json");
    let r = run(&[
        "train",
        "--data",
        s(&data),
        "--config",
        s(&cfg),
        "--out",
        s(&m),
    ]);
    assert!(!r.status.success());
    assert!(String::from_utf8_lossy(&r.stderr).contains("input_dim"));
    assert!(!m.exists());

    let missing = dir.path().join("missing.json");
    let r = run(&["train", "--data", s(&missing), "--out", s(&m)]);
    assert!(!r.status.success());
    assert!(String::from_utf8_lossy(&r.stderr).contains("missing.json"));
}

#[test]
fn summarize_writes_normalized_scores() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_synth(dir.path(), 0);
    let cfg = dir.path().join("stack.json");
    write(&cfg, &json!({"epochs_offline": 1}));
    let m = dir.path().join("m.json");
    ok(&[
        "train",
        "--data",
        s(&data),
        "--config",
        s(&cfg),
        "--max-sequences",
        "40",
        "--out",
        s(&m),
    ]);
    let sum_cfg = dir.path().join("sum.json");
    write(&sum_cfg, &json!({"chunk_size": 100}));
    let scores = dir.path().join("scores.json");
    ok(&[
        "summarize",
        "--data",
        s(&data),
        "--model",
        s(&m),
        "--config",
        s(&sum_cfg),
        "--out",
        s(&scores),
    ]);
    let file: ScoreFile = serde_json::from_value(read(&scores)).unwrap();
    assert!(!file.clips.is_empty());
    assert!(file
        .clips
        .iter()
        .all(|c| (0.0..=1.0).contains(&c.score) && c.raw_error >= 0.0));
    assert!(file
        .clips
        .iter()
        .all(|c| c.chunk == c.frames.midpoint() / 100));
    assert_eq!(file.frame_scores.len(), 400);

    let report = dir.path().join("report.json");
    let out = ok(&[
        "eval",
        "--scores",
        s(&scores),
        "--data",
        s(&data),
        "--out",
        s(&report),
    ]);
    let printed: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(printed, read(&report));
    assert!(printed["frame_level"]["f_measure"].is_number());
}

#[test]
fn summarize_rejects_dimension_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("synth.json");
    write(
        &cfg,
        &json!({"n_objects": 2, "frames": 200, "feature_dim": 16}),
    );
    let data = dir.path().join("d.json");
    ok(&["synth", "--config", s(&cfg), "--out", s(&data)]);
    let stack = dir.path().join("stack.json");
    write(&stack, &json!({"epochs_offline": 0}));
    let real = small_synth(dir.path(), 0);
    let m = dir.path().join("m.json");
    ok(&[
        "train",
        "--data",
        s(&real),
        "--config",
        s(&stack),
        "--out",
        s(&m),
    ]);
    let scores = dir.path().join("scores.json");
    let r = run(&[
        "summarize",
        "--data",
        s(&data),
        "--model",
        s(&m),
        "--out",
        s(&scores),
    ]);
    assert!(!r.status.success());
    assert!(String::from_utf8_lossy(&r.stderr).contains("feature_dim"));
    assert!(!scores.exists());
}

#[test]
fn empty_dataset_gives_empty_score_file() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("empty.json");
    write(
        &data,
        &json!({"metadata": {"feature_dim": 64, "total_frames": 50}, "trajectories": [], "ground_truth": []}),
    );
    let stack = dir.path().join("stack.json");
    write(&stack, &json!({"epochs_offline": 0}));
    let real = small_synth(dir.path(), 0);
    let m = dir.path().join("m.json");
    ok(&[
        "train",
        "--data",
        s(&real),
        "--config",
        s(&stack),
        "--out",
        s(&m),
    ]);
    let scores = dir.path().join("scores.json");
    ok(&[
        "summarize",
        "--data",
        s(&data),
        "--model",
        s(&m),
        "--out",
        s(&scores),
    ]);
    let v = read(&scores);
    assert!(v["clips"].as_array().unwrap().is_empty());
    assert_eq!(v["frame_scores"].as_array().unwrap().len(), 50);
}

fn bx(x: f64, y: f64) -> BoundingBox {
    BoundingBox::new(x, y, 10.0, 10.0)
}

fn gt(start: usize, end: usize, b: BoundingBox) -> GroundTruthClip {
    GroundTruthClip {
        frames: FrameRange::new(start, end),
        b_start: b,
        b_end: b,
    }
}

fn rec(start: usize, end: usize, b: BoundingBox, score: f64) -> ClipRecord {
    ClipRecord {
        object_id: 0,
        frames: FrameRange::new(start, end),
        b_start: b,
        b_end: b,
        raw_error: score,
        score,
        chunk: 0,
    }
}

/// Writes a dataset with the given ground truth and a score file with the
/// given clips, runs `eval` and returns the printed report.
fn eval_fixture(gts: Vec<GroundTruthClip>, clips: Vec<ClipRecord>) -> (Value, String) {
    let dir = tempfile::tempdir().unwrap();
    let total_frames = 50;
    let ds = DatasetFile {
        metadata: DatasetMeta {
            feature_dim: 4,
            total_frames,
            fps: None,
        },
        trajectories: vec![],
        ground_truth: gts,
    };
    let scores: Vec<f64> = clips.iter().map(|c| c.score).collect();
    let ranges: Vec<FrameRange> = clips.iter().map(|c| c.frames).collect();
    let file = ScoreFile {
        total_frames,
        frame_scores: frame_level_scores(&scores, &ranges, total_frames),
        clips,
    };
    let data = dir.path().join("d.json");
    let sc = dir.path().join("s.json");
    write(&data, &serde_json::to_value(&ds).unwrap());
    write(&sc, &serde_json::to_value(&file).unwrap());
    let out = ok(&["eval", "--scores", s(&sc), "--data", s(&data)]);
    (
        serde_json::from_slice(&out.stdout).unwrap(),
        String::from_utf8(out.stderr).unwrap(),
    )
}

#[test]
fn eval_three_predictions_two_ground_truths() {
    // Clip 1 and clip 2 match (temporal IoU 1 and 0.5, spatial IoU 1);
    // clip 3 lies outside both ground-truth clips.
    let (r, _) = eval_fixture(
        vec![gt(0, 9, bx(0.0, 0.0)), gt(20, 29, bx(50.0, 50.0))],
        vec![
            rec(0, 9, bx(0.0, 0.0), 0.9),
            rec(20, 24, bx(50.0, 50.0), 0.6),
            rec(40, 49, bx(0.0, 0.0), 0.7),
        ],
    );
    let close = |key: &str, want: f64| {
        let got = r[key].as_f64().unwrap();
        assert!((got - want).abs() < 1e-12, "{key}: {got} vs {want}");
    };
    close("precision", 2.0 / 3.0);
    close("recall", 1.0);
    close("f_measure", 0.8);
    // Ranked T, F, T: (1/1 + 2/3) / 2.
    close("ap", 5.0 / 6.0);
    // Positives 0.9 and 0.6 against the negative 0.7.
    close("auc", 0.5);
    assert_eq!(
        (r["tp"].as_u64(), r["fp"].as_u64(), r["fn"].as_u64()),
        (Some(2), Some(1), Some(0))
    );
}

#[test]
fn eval_perfect_and_empty_predictions() {
    let gts = vec![gt(0, 9, bx(0.0, 0.0)), gt(20, 29, bx(50.0, 50.0))];
    let (r, _) = eval_fixture(
        gts.clone(),
        vec![
            rec(0, 9, bx(0.0, 0.0), 1.0),
            rec(20, 29, bx(50.0, 50.0), 1.0),
        ],
    );
    for key in ["precision", "recall", "f_measure", "ap"] {
        assert_eq!(r[key].as_f64(), Some(1.0), "{key}");
    }

    let (r, warning) = eval_fixture(gts, vec![]);
    for key in ["precision", "recall", "f_measure"] {
        assert_eq!(r[key].as_f64(), Some(0.0), "{key}");
    }
    assert!(r["ap"].is_null());
    assert!(warning.contains("AP is null"));
}

#[test]
fn gradcheck_command_passes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("g.json");
    write(
        &cfg,
        &json!({"instances": 4, "max_input_dim": 6, "max_hidden_dim": 5}),
    );
    let report = dir.path().join("r.json");
    let out = ok(&["gradcheck", "--config", s(&cfg), "--out", s(&report)]);
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("PASS"));
    let v = read(&report);
    assert_eq!(v["passed"], json!(true));
    assert_eq!(v["cases"].as_array().unwrap().len(), 8);

    write(&cfg, &json!({"max_seq_len": 9}));
    assert!(!run(&["gradcheck", "--config", s(&cfg)]).status.success());
}
