use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spindoe"))
        .current_dir(dir)
        .env_remove("SPINDOE_CONFIG")
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = run(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn rows(path: &Path) -> Vec<HashMap<String, String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    let headers = r.headers().unwrap().clone();
    r.records()
        .map(|rec| {
            let rec = rec.unwrap();
            headers.iter().map(String::from).zip(rec.iter().map(String::from)).collect()
        })
        .collect()
}

fn num(row: &HashMap<String, String>, key: &str) -> f64 {
    row[key].parse().unwrap_or_else(|_| panic!("{key} = {:?}", row[key]))
}

/// Random (unoptimized) pattern, so tests stay fast.
fn pattern(dir: &TempDir) -> PathBuf {
    ok(dir.path(), &["pattern", "gen", "--iters", "0", "--min-sep", "10", "-o", "p.json"]);
    dir.path().join("p.json")
}

#[test]
fn invalid_arguments_exit_2() {
    let dir = TempDir::new().unwrap();
    let out = run(dir.path(), &["pattern", "gen", "--n", "2", "-o", "p.json"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!out.stderr.is_empty());
    let out = run(dir.path(), &["synth", "seq", "--pattern", "p.json", "--axis", "1,2", "-o", "o.csv"]);
    assert_eq!(out.status.code(), Some(2));
    let out = run(dir.path(), &["orient", "--pattern", "missing.json", "--obs", "x.csv", "-o", "o.csv"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn clean_sequence_round_trip() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    pattern(&dir);
    ok(d, &[
        "synth", "seq", "--pattern", "p.json", "--rps", "50", "--axis", "0.2,-1,0.4", "--frames", "10",
        "--clean", "-o", "obs.csv", "--truth", "truth.csv",
    ]);
    ok(d, &["orient", "--pattern", "p.json", "--obs", "obs.csv", "-o", "orient.csv"]);
    let orient = rows(&d.join("orient.csv"));
    assert_eq!(orient.len(), 10);
    for r in &orient {
        assert_eq!(r["status"], "ok");
        assert!(num(r, "rmse") < 1e-6);
    }
    let truth = rows(&d.join("truth.csv"));
    for (o, t) in orient.iter().zip(&truth) {
        let dot: f64 = ["qw", "qx", "qy", "qz"].iter().map(|k| num(o, k) * num(t, k)).sum();
        assert!(dot.abs() > 1.0 - 1e-12);
    }

    ok(d, &["spin", "--orient", "orient.csv", "-o", "spin.csv"]);
    let spin = rows(&d.join("spin.csv"));
    assert_eq!(spin.len(), 1);
    assert!((num(&spin[0], "mag_rps") - 50.0).abs() < 1e-6);
    let axis = [num(&spin[0], "wx"), num(&spin[0], "wy"), num(&spin[0], "wz")];
    let n = (0.2f64.powi(2) + 1.0 + 0.16).sqrt();
    let cos = (axis[0] * 0.2 - axis[1] + axis[2] * 0.4) / n / axis.iter().map(|a| a * a).sum::<f64>().sqrt();
    assert!(cos > 1.0 - 1e-9);
    assert!(d.join("spin.csv.manifest.json").exists());
}

#[test]
fn spin_flags_outlier_rows() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    let mut text = String::from("t,qw,qx,qy,qz\n");
    let omega = 2.0 * std::f64::consts::PI * 50.0;
    for i in 0..10 {
        let t = i as f64 / 350.0;
        let half = 0.5 * omega * t;
        let (w, z) = if i == 2 || i == 7 {
            (0.3f64, 0.0f64)
        } else {
            (half.cos(), half.sin())
        };
        let x = if i == 2 || i == 7 { (1.0 - w * w).sqrt() } else { 0.0 };
        text += &format!("{t},{w},{x},0,{z}\n");
    }
    std::fs::write(d.join("q.csv"), text).unwrap();
    ok(d, &["spin", "--orient", "q.csv", "-o", "spin.csv"]);
    let spin = rows(&d.join("spin.csv"));
    assert_eq!(num(&spin[0], "n_inliers"), 8.0);
    assert!((num(&spin[0], "mag_rps") - 50.0).abs() < 1e-6);
    assert!((num(&spin[0], "wz") - omega).abs() < 1e-4);
}

#[test]
fn too_few_dots_and_bad_rows() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    pattern(&dir);
    std::fs::write(d.join("two.csv"), "frame,t,X,Y,Z\n0,0,0,0,1\n0,0,0.6,0,0.8\n").unwrap();
    ok(d, &["orient", "--pattern", "p.json", "--obs", "two.csv", "-o", "o.csv"]);
    let o = rows(&d.join("o.csv"));
    assert_eq!(o.len(), 1);
    assert_eq!(o[0]["status"], "too_few_dots");
    assert_eq!(o[0]["qw"], "");

    std::fs::write(d.join("bad.csv"), "frame,t,X,Y,Z\n0,0,0,0,1\n0,0,zero,0,1\n").unwrap();
    let out = run(d, &["orient", "--pattern", "p.json", "--obs", "bad.csv", "-o", "o2.csv"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));

    std::fs::write(d.join("one.csv"), "t,qw,qx,qy,qz\n0,1,0,0,0\n").unwrap();
    let out = run(d, &["spin", "--orient", "one.csv", "-o", "s.csv"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn rerun_reproduces_outputs() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    pattern(&dir);
    ok(d, &[
        "--seed", "5", "synth", "obs", "--pattern", "p.json", "--frames", "20", "-o", "obs.csv",
    ]);
    let first = std::fs::read(d.join("obs.csv")).unwrap();
    let out = ok(d, &["rerun", "obs.csv.manifest.json"]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("reproduced 1 output"));
    assert_eq!(first, std::fs::read(d.join("obs.csv")).unwrap());

    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("obs.csv.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 5);
    assert_eq!(manifest["subcommand"], "synth obs");
    assert_eq!(manifest["inputs"][0]["path"], "p.json");

    std::fs::write(d.join("obs.csv"), "tampered").unwrap();
    let mut m = manifest.clone();
    m["args"] = serde_json::json!(["--seed", "6", "synth", "obs", "--pattern", "p.json", "--frames", "20", "-o", "obs.csv"]);
    std::fs::write(d.join("m.json"), m.to_string()).unwrap();
    let out = run(d, &["rerun", "m.json"]);
    assert_eq!(out.status.code(), Some(1));
}
