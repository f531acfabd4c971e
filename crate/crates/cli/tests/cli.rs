use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn ssc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ssc")).args(args).output().unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn synth_then_eval() {
    let tmp = tempfile::tempdir().unwrap();
    let x = tmp.path().join("x.csv");
    let y = tmp.path().join("y.csv");
    let out = ssc(&["synth", "--kind", "synth1", "--n", "30", "--p", "10", "--c", "3", "--seed", "2", "--out", path(&x), "--labels", path(&y)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let first = fs::read_to_string(&x).unwrap();
    assert_eq!(first.lines().count(), 10);
    let out = ssc(&["eval", "--pred", path(&y), "--truth", path(&y)]);
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "nmi 1.000000");
}

#[test]
fn cluster_writes_report() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("run");
    let out = ssc(&[
        "cluster", "--generator", "synth1", "--n", "40", "--p", "20", "--c", "2", "--method", "ssc-manpl", "--seeds", "0,1", "--heatmaps", "--out", path(&dir),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("seed 1: nmi"), "{stdout}");
    for f in ["report.json", "manifest.json", "nmi.csv", "seed-0/heatmap.pgm"] {
        assert!(dir.join(f).exists(), "{f}");
    }

    let hm = tmp.path().join("u.pgm");
    let out = ssc(&["heatmap", "--input", path(&dir.join("seed-0/embedding.csv")), "--out", path(&hm), "--embedding"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(fs::read(&hm).unwrap().starts_with(b"P5\n40 40\n255\n"));
}

#[test]
fn config_file_with_flag_override() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("cfg.json");
    fs::write(&cfg, r#"{"data": {"synth1": {"n": 30, "p": 10, "c": 3}}, "method": "sc", "c": 3, "seeds": [5]}"#).unwrap();
    let out = ssc(&["cluster", "--config", path(&cfg), "--seeds", "1,2,3"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(String::from_utf8_lossy(&out.stdout).matches("nmi").count(), 4);
}

#[test]
fn failed_seed_exits_one() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("cfg.json");
    // 40 neighbors cannot exist among 30 samples.
    fs::write(&cfg, r#"{"data": {"synth1": {"n": 30, "p": 10, "c": 3}}, "method": "sc", "c": 3, "kernels": {"single": [2.0, 40]}}"#).unwrap();
    let out = ssc(&["cluster", "--config", path(&cfg)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stdout).contains("FAILED"));
}

#[test]
fn invalid_parameter_exits_two() {
    let out = ssc(&["cluster", "--generator", "synth1", "--n", "30", "--c", "3", "--method", "ssc-manpl", "--sigma", "0.1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("sigma"));
    let out = ssc(&["cluster", "--generator", "synth1", "--c", "3", "--method", "louvain"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn kernels_writes_family_and_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let x = tmp.path().join("x.csv");
    assert!(ssc(&["synth", "--kind", "synth2", "--n", "30", "--p", "25", "--c", "2", "--d", "5", "--out", path(&x)]).status.success());
    let dir = tmp.path().join("k");
    let out = ssc(&["kernels", "--data", path(&x), "--deltas", "1,2", "--neighbors", "5,10", "--out", path(&dir)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let manifest: Vec<serde_json::Value> = serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest.len(), 5);
    assert!(dir.join("laplacian-03.csv").exists());
}
