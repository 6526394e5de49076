use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const BASE: &str = r#"
downsample = 1
min_face = 40
backend = "fixture"
fixture_miss_rate = 0.1
fixture_false_positive_rate = 1.0
fixture_center_jitter_sd = 0.03
svm_class_balanced = true
svm_epochs = 50
synth_frames = 60
data_dir = "data"
model = "model.json"
out_dir = "out"
"#;

fn segface(dir: &Path, args: &[&str]) -> Output {
    let cfg = dir.join("run.toml");
    Command::new(env!("CARGO_BIN_EXE_segface"))
        .arg(args[0])
        .arg("--config")
        .arg(&cfg)
        .args(&args[1..])
        .output()
        .expect("spawn segface")
}

fn workspace(extra: &str) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("run.toml"), format!("{BASE}{extra}")).unwrap();
    dir
}

fn ok(out: &Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

#[test]
fn synth_train_detect_eval() {
    let dir = workspace("");
    let p = dir.path();
    ok(&segface(p, &["synth", "--seed", "3"]));
    ok(&segface(p, &["train", "--seed", "3"]));
    assert!(p.join("model.json").exists());

    let clean = [
        "fixture_miss_rate=0",
        "fixture_false_positive_rate=0",
        "fixture_center_jitter_sd=0",
    ];
    let mut args = vec!["detect", "--seed", "3"];
    args.extend(clean);
    let stdout = ok(&segface(p, &args));

    let ann = fs::read_to_string(p.join("data/annotations.jsonl")).unwrap();
    let faces: Vec<bool> = ann
        .lines()
        .map(|l| !serde_json::from_str::<Value>(l).unwrap()["face"].is_null())
        .collect();
    let lines: Vec<&str> = stdout.lines().collect();
    assert_eq!(lines.len(), faces.len());
    for (line, has_face) in lines.iter().zip(&faces) {
        assert_eq!(line.ends_with(" NONE"), !has_face, "{line}");
        if *has_face {
            assert_eq!(line.split_whitespace().count(), 6, "{line}");
        }
    }

    let mut args = vec!["eval", "--seed", "3"];
    args.extend(clean);
    ok(&segface(p, &args));
    let report: Value = serde_json::from_str(&fs::read_to_string(p.join("out/report.json")).unwrap()).unwrap();
    assert_eq!(report["f1"].as_f64(), Some(1.0), "{report:#}");
    assert!(p.join("out/curves.csv").exists());
    assert!(p.join("out/detections.csv").exists());
}

#[test]
fn train_without_faces_fails() {
    let dir = workspace("synth_no_face_fraction = 1.0\n");
    let p = dir.path();
    ok(&segface(p, &["synth"]));
    let out = segface(p, &["train"]);
    assert!(!out.status.success());
}

#[test]
fn train_with_zero_noise_fails() {
    let dir = workspace("");
    let p = dir.path();
    ok(&segface(p, &["synth"]));
    let out = segface(p, &["train", "fixture_false_positive_rate=0", "fixture_miss_rate=0"]);
    assert!(!out.status.success());
}

#[test]
fn unknown_key_is_rejected() {
    let dir = workspace("zetta = 3\n");
    let out = segface(dir.path(), &["synth"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("zetta"));

    let dir = workspace("");
    let out = segface(dir.path(), &["synth", "bogus=1"]);
    assert!(!out.status.success());
}

#[test]
fn malformed_config_is_rejected() {
    let dir = workspace("zeta = [\n");
    assert!(!segface(dir.path(), &["synth"]).status.success());

    let dir = workspace("");
    assert!(!segface(dir.path(), &["synth", "zeta=-1"]).status.success());
    assert!(!segface(dir.path(), &["synth", "delta=1.5"]).status.success());
}

#[test]
fn bench_writes_timing() {
    let dir = workspace("bench_frames = 5\n");
    let p = dir.path();
    ok(&segface(p, &["synth"]));
    ok(&segface(p, &["bench"]));
    let bench: Value = serde_json::from_str(&fs::read_to_string(p.join("out/bench.json")).unwrap()).unwrap();
    assert_eq!(bench["timing"]["frames"].as_u64(), Some(5), "{bench:#}");
}
