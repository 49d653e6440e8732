use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn ofbvr(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ofbvr"))
        .current_dir(dir)
        .env_remove("OFBVR_SEED")
        .args(args)
        .output()
        .expect("spawn ofbvr")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = ofbvr(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn error_line(out: &Output) -> Value {
    assert!(!out.status.success());
    let text = String::from_utf8_lossy(&out.stderr);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 1, "{text}");
    let v: Value = serde_json::from_str(lines[0]).unwrap();
    assert!(v["message"].is_string());
    v
}

#[test]
fn tile_with_k_1_is_a_single_rect() {
    let dir = tempfile::tempdir().unwrap();
    let values: Vec<f64> = (0..12 * 24).map(|i| ((i * 37) % 11) as f64).collect();
    let grid = serde_json::json!({ "rows": 12, "cols": 24, "values": values });
    std::fs::write(dir.path().join("e.json"), grid.to_string()).unwrap();
    let layout: Value = serde_json::from_str(&ok(dir.path(), &["tile", "--efficiency", "e.json", "--k", "1"])).unwrap();
    let rects = layout["rects"].as_array().unwrap();
    assert_eq!(rects.len(), 1);
    assert_eq!(layout["K"], 1);
}

#[test]
fn score_without_jnd_is_plain_psnr() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["gen", "video", "--seed", "4", "--chunks", "2", "--frames", "6", "--out", "v"]);
    let frames = "v/synth-4.frames";
    let enc: Vec<String> = (1..6).map(|i| format!("{frames}/{i:05}.pgm")).collect();
    let mut args = vec!["score", "--orig", "v/synth-4.frames/00000.pgm"];
    for e in &enc {
        args.extend(["--enc", e.as_str()]);
    }
    let report: Value = serde_json::from_str(&ok(dir.path(), &args)).unwrap();
    let frames = report["frames"].as_array().unwrap();
    assert_eq!(frames.len(), 5);
    for f in frames {
        assert_eq!(f["psnr_of"], f["psnr"]);
    }
    assert_eq!(report["tile_scores"].as_array().unwrap().len(), 12);
    assert_eq!(report["efficiency"][0].as_array().unwrap().len(), 24);
}

#[test]
fn flow_jnd_score_chain_raises_the_score() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["gen", "video", "--seed", "8", "--chunks", "2", "--frames", "2", "--out", "v"]);
    let (a, b) = ("v/synth-8.frames/00000.pgm", "v/synth-8.frames/00001.pgm");
    ok(dir.path(), &["flow", "--prev", a, "--next", b, "--out", "f.bin", "--dv", "dv.bin", "--dd", "dd.bin"]);
    ok(dir.path(), &["jnd", "--dv", "dv.bin", "--dd", "dd.bin", "--out", "j.bin"]);
    let report: Value =
        serde_json::from_str(&ok(dir.path(), &["score", "--orig", a, "--enc", b, "--jnd", "j.bin"])).unwrap();
    let f = &report["frames"][0];
    assert!(f["psnr_of"].as_f64().unwrap() >= f["psnr"].as_f64().unwrap());
}

#[test]
fn eval_writes_one_row_per_controller_and_trace() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["gen", "video", "--seed", "1", "--count", "2", "--chunks", "8", "--out", "v"]);
    for i in 0..5 {
        let out = format!("bw/t{i}.csv");
        let seed = (10 + i).to_string();
        ok(d, &["gen", "bw", "--seed", &seed, "--duration", "60", "--mean", "3e6", "--out", &out]);
    }
    ok(d, &["train", "--videos", "v", "--traces", "bw", "--episodes", "2", "--out", "p.json"]);
    ok(d, &["eval", "--videos", "v", "--traces", "bw", "--params", "p.json", "--jobs", "3", "--out", "s.csv"]);
    let mut reader = csv::Reader::from_path(d.join("s.csv")).unwrap();
    let headers = reader.headers().unwrap().clone();
    assert_eq!(&headers[0], "controller");
    let rows: Vec<csv::StringRecord> = reader.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 15);
    let mut pairs: Vec<(String, String)> = rows.iter().map(|r| (r[0].to_string(), r[1].to_string())).collect();
    pairs.sort();
    pairs.dedup();
    assert_eq!(pairs.len(), 15);
    // a second run with a different worker count gives the same file
    ok(d, &["eval", "--videos", "v", "--traces", "bw", "--params", "p.json", "--out", "s1.csv"]);
    assert_eq!(std::fs::read(d.join("s.csv")).unwrap(), std::fs::read(d.join("s1.csv")).unwrap());
}

#[test]
fn simulate_reports_a_summary_and_log() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["gen", "video", "--seed", "2", "--chunks", "6", "--out", "v"]);
    ok(d, &["gen", "bw", "--profile", "constant", "--bps", "1e9", "--duration", "30", "--out", "bw.csv"]);
    let summary: Value = serde_json::from_str(&ok(
        d,
        &[
            "simulate",
            "--manifest",
            "v/synth-2.manifest.json",
            "--bandwidth",
            "bw.csv",
            "--controller",
            "top",
            "--out",
            "log.csv",
        ],
    ))
    .unwrap();
    assert_eq!(summary["rebuffer_ratio"], 0.0);
    assert_eq!(summary["chunks"], 6);
    let log = std::fs::read_to_string(d.join("log.csv")).unwrap();
    assert_eq!(log.lines().count(), 7);
}

#[test]
fn failures_print_one_json_line() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let missing = ofbvr(d, &["tile", "--efficiency", "nope.json"]);
    assert_eq!(error_line(&missing)["error"], "io");

    let usage = ofbvr(d, &["tile", "--k"]);
    assert_eq!(usage.status.code(), Some(2));
    assert_eq!(error_line(&usage)["error"], "usage");

    std::fs::write(d.join("bad.json"), r#"{"rows": 2, "cols": 2, "values": [1, 2, 3]}"#).unwrap();
    assert_eq!(error_line(&ofbvr(d, &["tile", "--efficiency", "bad.json"]))["error"], "input");

    let negative = ofbvr(d, &["gen", "bw", "--profile", "constant", "--bps=-1", "--out", "x.csv"]);
    assert_eq!(error_line(&negative)["error"], "input");
}

#[test]
fn config_file_sets_defaults_and_flags_override() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("c.json"), r#"{"gen": {"bw": {"profile": "constant", "bps": 2e6, "duration": 50}}}"#)
        .unwrap();
    ok(d, &["--config", "c.json", "gen", "bw", "--out", "a.csv"]);
    ok(d, &["--config", "c.json", "gen", "bw", "--bps", "3e6", "--out", "b.csv"]);
    let a = std::fs::read_to_string(d.join("a.csv")).unwrap();
    let b = std::fs::read_to_string(d.join("b.csv")).unwrap();
    assert!(a.contains("50.0,2000000"), "{a}");
    assert!(b.contains("3000000"), "{b}");
}

#[test]
fn env_seed_overrides_default_and_generators_repeat() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let run = |out: &str, seed: Option<&str>| {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_ofbvr"));
        cmd.current_dir(d).env_remove("OFBVR_SEED").args(["gen", "bw", "--duration", "40", "--out", out]);
        if let Some(s) = seed {
            cmd.env("OFBVR_SEED", s);
        }
        assert!(cmd.status().unwrap().success());
        std::fs::read(d.join(out)).unwrap()
    };
    let default = run("d.csv", None);
    assert_eq!(default, run("d2.csv", None));
    let seeded = run("s.csv", Some("7"));
    assert_ne!(default, seeded);
    assert_eq!(seeded, run("s2.csv", Some("7")));

    ok(d, &["gen", "video", "--seed", "3", "--chunks", "4", "--frames", "1", "--out", "a"]);
    ok(d, &["gen", "video", "--seed", "3", "--chunks", "4", "--frames", "1", "--out", "b"]);
    for f in ["synth-3.manifest.json", "synth-3.viewpoints.csv", "synth-3.frames/00000.pgm"] {
        assert_eq!(std::fs::read(d.join("a").join(f)).unwrap(), std::fs::read(d.join("b").join(f)).unwrap(), "{f}");
    }
}

#[test]
fn train_is_repeatable_with_one_worker() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["gen", "video", "--seed", "5", "--chunks", "6", "--out", "v"]);
    ok(d, &["gen", "bw", "--seed", "5", "--duration", "40", "--out", "bw.csv"]);
    for out in ["p1.json", "p2.json"] {
        ok(
            d,
            &[
                "train",
                "--videos",
                "v",
                "--traces",
                "bw.csv",
                "--episodes",
                "3",
                "--seed",
                "9",
                "--workers",
                "1",
                "--out",
                out,
            ],
        );
    }
    assert_eq!(std::fs::read(d.join("p1.json")).unwrap(), std::fs::read(d.join("p2.json")).unwrap());
}
