use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn fecgkit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fecgkit"))
        .args(args)
        .env_remove("FECGKIT_SEED")
        .output()
        .expect("binary runs")
}

fn json(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    v.sort();
    v
}

fn short_scenario(dir: &Path) -> String {
    let p = dir.join("s.json");
    fs::write(&p, r#"{"fs": 250, "duration": 20.0}"#).unwrap();
    p.to_string_lossy().into_owned()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn simulate_is_byte_identical_for_a_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = short_scenario(tmp.path());
    let (a, b, c) = (tmp.path().join("a"), tmp.path().join("b"), tmp.path().join("c"));
    json(&fecgkit(&["simulate", "--config", &cfg, "--seed", "7", "--out", path(&a)]));
    json(&fecgkit(&["simulate", "--config", &cfg, "--seed", "7", "--out", path(&b)]));
    assert_eq!(tree(&a), tree(&b));
    let out = Command::new(env!("CARGO_BIN_EXE_fecgkit"))
        .args(["simulate", "--config", &cfg, "--out", path(&c)])
        .env("FECGKIT_SEED", "7")
        .output()
        .unwrap();
    assert!(out.status.success());
    assert_eq!(tree(&a), tree(&c));
    for f in ["mixture.csv", "maternal.csv", "fetal0.csv", "mqrs.txt", "fqrs0.txt", "truth.json"] {
        assert!(a.join(f).exists(), "{f}");
    }
}

#[test]
fn score_identical_series() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a.txt");
    let beats: String = (0..20).map(|k| format!("{}\n", 2500 + 450 * k)).collect();
    fs::write(&a, beats).unwrap();
    let v = json(&fecgkit(&["score", "--ref", path(&a), "--test", path(&a), "--fs", "1000", "--n-samples", "15000"]));
    assert_eq!(v["f1"], 1.0);
    assert_eq!(v["e2"], 0.0);
    assert_eq!(v["hrm"], 100.0);
}

#[test]
fn exit_codes_follow_error_class() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("missing.txt");
    let out = fecgkit(&["score", "--ref", path(&missing), "--test", path(&missing)]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(fecgkit(&["score", "--bogus"]).status.code(), Some(3));
    let a = tmp.path().join("a.txt");
    fs::write(&a, "100\n500\n").unwrap();
    let out = fecgkit(&["score", "--ref", path(&a), "--test", path(&a), "--events", "nope"]);
    assert_eq!(out.status.code(), Some(3));
    let y = tmp.path().join("y.csv");
    let x = tmp.path().join("x.csv");
    fs::write(&y, "a,b\n300,310\n320,330\n340,350\n").unwrap();
    fs::write(&x, "rr\n0.5\n0.5\n0.5\n").unwrap();
    let out = fecgkit(&["fuse-labels", "--annotations", path(&y), "--features", path(&x)]);
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn fuse_labels_reports_precisions() {
    let tmp = tempfile::tempdir().unwrap();
    let y = tmp.path().join("y.csv");
    let x = tmp.path().join("x.csv");
    fs::write(&y, "good,poor\n300,290\n320,345\n341,330\n362,380\n379,371\n").unwrap();
    fs::write(&x, "rr\n0.4\n0.5\n0.6\n0.7\n0.8\n").unwrap();
    let v = json(&fecgkit(&["fuse-labels", "--annotations", path(&y), "--features", path(&x)]));
    let lambda: Vec<f64> = v["lambda"].as_array().unwrap().iter().map(|l| l.as_f64().unwrap()).collect();
    assert!(lambda[0] > lambda[1]);
    assert_eq!(v["z_hat"].as_array().unwrap().len(), 5);
    assert_eq!(v["annotators"][1], "poor");
}

#[test]
fn extract_detect_and_sqi_on_a_simulation() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = short_scenario(tmp.path());
    let sim = tmp.path().join("sim");
    json(&fecgkit(&["simulate", "--config", &cfg, "--seed", "3", "--out", path(&sim), "--plot"]));
    assert!(sim.join("mixture.gp").exists());
    let mixture = sim.join("mixture.csv");

    let out = tmp.path().join("ext");
    let v = json(&fecgkit(&["extract", "--in", path(&mixture), "--method", "TSpca-ICA", "--out", path(&out)]));
    for k in ["method", "SMI", "BCM", "chosen_channel"] {
        assert!(v.get(k).is_some(), "{k}");
    }
    assert_eq!(v["method"], "TSpca-ICA");
    for f in ["residuals.csv", "fqrs.txt", "report.json"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let v = json(&fecgkit(&["extract", "--in", path(&mixture), "--method", "FUSE", "--out", path(&out)]));
    assert_eq!(v["method"], "FUSE");
    let bad = fecgkit(&["extract", "--in", path(&mixture), "--method", "XYZ", "--out", path(&out)]);
    assert_eq!(bad.status.code(), Some(3));
    let bad = fecgkit(&["extract", "--in", path(&mixture), "--params", r#"{"prefilter": {"fb": "x"}}"#, "--out", path(&out)]);
    assert_eq!(bad.status.code(), Some(3));

    let beats = tmp.path().join("m.txt");
    let v = json(&fecgkit(&["detect", "--in", path(&mixture), "--refractory-ms", "250", "--out", path(&beats)]));
    assert!(v["n_beats"].as_u64().unwrap() > 10);
    assert!(beats.exists());

    let v = json(&fecgkit(&["sqi", "--in", path(&mixture), "--kinds", "k,bas", "--channel", "0"]));
    let windows = v["channels"][0]["windows"].as_array().unwrap();
    assert_eq!(windows.len(), 11);
    assert!(windows[0]["values"].get("kSQI").is_some());
}

#[test]
fn bench_ekfd_reports_gap_and_bar() {
    let v = json(&fecgkit(&["bench", "--suite", "ekfd", "--n", "1", "--seed", "1"]));
    assert!(v["median_gap_db"].is_number());
    assert_eq!(v["bar_db"], 8.0);
    assert!(v["pass"].is_boolean());
    assert_eq!(fecgkit(&["bench", "--suite", "nope"]).status.code(), Some(3));
}
