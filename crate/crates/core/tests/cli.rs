use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn cico(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cico"))
        .args(args)
        .output()
        .expect("spawn cico")
}

fn s(p: &Path) -> String {
    p.to_string_lossy().into_owned()
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

fn synth_into(dir: &Path, extra: &[&str]) {
    let mut args = vec![
        "synth",
        "--out",
        dir.to_str().unwrap(),
        "--videos",
        "2",
        "--frames",
        "9",
        "--seed",
        "3",
    ];
    args.extend_from_slice(extra);
    let out = cico(&args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn help_and_version_exit_zero() {
    assert_eq!(cico(&["--help"]).status.code(), Some(0));
    assert_eq!(cico(&["--version"]).status.code(), Some(0));
    let help = String::from_utf8(cico(&["infer", "--help"]).stdout).unwrap();
    assert!(help.contains("--netout"));
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(cico(&[]).status.code(), Some(1));
    assert_eq!(cico(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(cico(&["coherence", "--gt"]).status.code(), Some(1));
}

#[test]
fn missing_input_exits_two() {
    let out = cico(&[
        "eval",
        "--gt",
        "/nonexistent/a.json",
        "--results",
        "/nonexistent/b.json",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!out.stderr.is_empty());
}

#[test]
fn malformed_input_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\"videos\": 3}").unwrap();
    let out = cico(&["coherence", "--gt", &s(&bad)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bad.json"));
}

#[test]
fn invalid_config_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    synth_into(dir.path(), &[]);
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[partition]\nlength = 3\noverlap = 3\n").unwrap();
    let out = cico(&[
        "infer",
        "--netout",
        &s(&dir.path().join("netout.cco")),
        "--config",
        &s(&cfg),
        "--out",
        &s(&dir.path().join("r.json")),
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn eval_of_ground_truth_against_itself_is_perfect() {
    let dir = tempfile::tempdir().unwrap();
    synth_into(dir.path(), &[]);
    let gt = read_json(&dir.path().join("annotations.json"));
    let results: Vec<Value> = gt["annotations"]
        .as_array()
        .unwrap()
        .iter()
        .map(|a| {
            serde_json::json!({
                "video_id": a["video_id"],
                "category_id": a["category_id"],
                "score": 1.0,
                "segmentations": a["segmentations"],
            })
        })
        .collect();
    let rpath = dir.path().join("self.json");
    std::fs::write(&rpath, serde_json::to_string(&results).unwrap()).unwrap();
    let out = cico(&[
        "eval",
        "--gt",
        &s(&dir.path().join("annotations.json")),
        "--results",
        &s(&rpath),
    ]);
    assert!(out.status.success());
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    // several same-category instances per video, so AR@1 stays below 1
    assert!(report["ar1"].as_f64().unwrap() < 1.0);
    for key in ["ap", "ap50", "ap75", "ar10"] {
        assert_eq!(report[key].as_f64(), Some(1.0), "{key}");
    }
}

#[test]
fn coherence_reports_each_delta() {
    let dir = tempfile::tempdir().unwrap();
    synth_into(dir.path(), &[]);
    let out = cico(&[
        "coherence",
        "--gt",
        &s(&dir.path().join("annotations.json")),
        "--delta-max",
        "4",
    ]);
    assert!(out.status.success());
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    let deltas = report["deltas"].as_array().unwrap();
    assert_eq!(deltas.len(), 4);
    for (i, d) in deltas.iter().enumerate() {
        assert_eq!(d["delta"].as_u64(), Some(i as u64 + 1));
        let pb = d["pb_ge075"].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&pb));
    }
}

#[test]
fn infer_writes_results_and_track_dump() {
    let dir = tempfile::tempdir().unwrap();
    synth_into(dir.path(), &[]);
    let results = dir.path().join("r.json");
    let dump = dir.path().join("t.jsonl");
    let out = cico(&[
        "infer",
        "--netout",
        &s(&dir.path().join("netout.cco")),
        "--config",
        &s(&dir.path().join("config.toml")),
        "--out",
        &s(&results),
        "--dump-track",
        &s(&dump),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let r = read_json(&results);
    assert_eq!(r.as_array().unwrap().len(), 6);
    for line in std::fs::read_to_string(&dump).unwrap().lines() {
        let a: Value = serde_json::from_str(line).unwrap();
        assert!(a["id"].as_u64().unwrap() >= 1);
    }
}

#[test]
fn assemble_dumps_one_clip() {
    let dir = tempfile::tempdir().unwrap();
    synth_into(dir.path(), &[]);
    let out = cico(&[
        "assemble",
        "--netout",
        &s(&dir.path().join("netout.cco")),
        "--clip",
        "0",
    ]);
    assert!(out.status.success());
    let dets: Value = serde_json::from_slice(&out.stdout).unwrap();
    let dets = dets.as_array().unwrap();
    assert_eq!(dets.len(), 3);
    assert_eq!(dets[0]["segmentations"].as_array().unwrap().len(), 3);
    let out = cico(&[
        "assemble",
        "--netout",
        &s(&dir.path().join("netout.cco")),
        "--clip",
        "999",
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn loss_on_regression_outputs() {
    let dir = tempfile::tempdir().unwrap();
    synth_into(dir.path(), &["--regression"]);
    let out = cico(&[
        "loss",
        "--netout",
        &s(&dir.path().join("netout.cco")),
        "--gt",
        &s(&dir.path().join("annotations.json")),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rep: Value = serde_json::from_slice(&out.stdout).unwrap();
    // oracle scores are 0.99 on the right class, stored as f32
    assert!((rep["cls"].as_f64().unwrap() - -(f64::from(0.99f32).ln())).abs() < 1e-12);
    assert!(rep["reg"].as_f64().unwrap() < 1e-9);
    let parts = ["cls", "reg", "mask", "track"]
        .iter()
        .map(|k| rep[k].as_f64().unwrap())
        .sum::<f64>();
    assert!((rep["total"].as_f64().unwrap() - parts).abs() < 1e-12);
}

#[test]
fn loss_rejects_decoded_outputs() {
    let dir = tempfile::tempdir().unwrap();
    synth_into(dir.path(), &[]);
    let out = cico(&[
        "loss",
        "--netout",
        &s(&dir.path().join("netout.cco")),
        "--gt",
        &s(&dir.path().join("annotations.json")),
    ]);
    assert_eq!(out.status.code(), Some(1));
}
