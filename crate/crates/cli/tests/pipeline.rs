use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_sos-subspace");

/// Small enough to solve in about a second.
const TINY: &str = r#"{
    "instance": {"d": 2, "r": 1, "n": 6, "alpha": 0.5, "dist_tag": "gaussian",
                 "strategy": "planted_second_subspace", "seed": 0},
    "relaxation_degree": 4,
    "seeds": [3],
    "alphas": [0.5],
    "time_budget_secs": 120
}"#;

fn run(dir: &Path, args: &[&str]) -> Output {
    let cfg = dir.join("tiny.json");
    if !cfg.exists() {
        std::fs::write(&cfg, TINY).unwrap();
    }
    Command::new(BIN)
        .args(args)
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join("out"))
        .output()
        .unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn full_pipeline_writes_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    for cmd in ["gen", "solve", "round", "oracle"] {
        let o = run(dir.path(), &[cmd]);
        assert!(o.status.success(), "{cmd}: {}", stderr(&o));
    }
    let out = dir.path().join("out");
    let inst = json(&out.join("instance_s3.json"));
    assert_eq!(inst["points"].as_array().unwrap().len(), 6);

    let val = json(&out.join("validation_s3.json"));
    assert_eq!(val["passed"], true);

    let cand = json(&out.join("candidates_s3.json"));
    assert_eq!(cand["scheme"], "votes");
    let list = cand["candidates"].as_array().unwrap();
    assert_eq!(list.len(), cand["list_size"].as_u64().unwrap() as usize);
    let best = list.iter().map(|c| c["distance_to_truth"].as_f64().unwrap()).fold(f64::INFINITY, f64::min);
    assert!((best - cand["list_error"].as_f64().unwrap()).abs() < 1e-12);

    let orc = json(&out.join("oracle_s3.json"));
    assert!(orc["list_error"].as_f64().unwrap() <= 1e-8);
    for span in orc["spans"].as_array().unwrap() {
        assert_eq!(span["verdict"]["consistent"], true);
    }

    let o = run(dir.path(), &["round", "--scheme", "large-list", "--t", "1"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(json(&out.join("candidates_s3.json"))["scheme"], "large-list");
}

#[test]
fn missing_upstream_artifact_names_the_command() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["solve"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("run `gen` first"), "{}", stderr(&o));
    let o = run(dir.path(), &["report"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("run `bench` first"));
}

#[test]
fn invalid_settings_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(dir.path(), &["gen", "--degree", "5"]).status.code(), Some(2));
    assert_eq!(run(dir.path(), &["gen", "--scheme", "large-list", "--t", "2"]).status.code(), Some(2));
    std::fs::write(dir.path().join("tiny.json"), "{ not json").unwrap();
    assert_eq!(run(dir.path(), &["gen"]).status.code(), Some(2));
}

#[test]
fn exhausted_time_budget_exits_with_3() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("tiny.json"), TINY.replace("\"time_budget_secs\": 120", "\"time_budget_secs\": 1e-9")).unwrap();
    assert!(run(dir.path(), &["gen"]).status.success());
    let o = run(dir.path(), &["solve"]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

/// Every column except `solve_seconds` depends on the config alone.
#[test]
fn bench_is_deterministic_and_reports_medians() {
    let mut tables = Vec::new();
    for _ in 0..2 {
        let dir = tempfile::tempdir().unwrap();
        let o = run(dir.path(), &["bench", "--seed", "5"]);
        assert!(o.status.success(), "{}", stderr(&o));
        let text = std::fs::read_to_string(dir.path().join("out/bench.csv")).unwrap();
        let mut rdr = csv::Reader::from_reader(text.as_bytes());
        let headers = rdr.headers().unwrap().clone();
        assert_eq!(
            headers.iter().collect::<Vec<_>>(),
            ["alpha", "seed", "scheme", "list_size", "list_error", "solve_seconds", "status"]
        );
        let rows: Vec<Vec<String>> = rdr
            .records()
            .map(|r| {
                let r = r.unwrap();
                r.iter().enumerate().filter(|(i, _)| *i != 5).map(|(_, f)| f.to_string()).collect()
            })
            .collect();
        assert_eq!(rows.len(), 2);
        assert!(rows.iter().all(|r| r[5] == "ok"), "{rows:?}");

        let o = run(dir.path(), &["report"]);
        assert!(o.status.success(), "{}", stderr(&o));
        let report = std::fs::read_to_string(dir.path().join("out/report.csv")).unwrap();
        assert!(report.starts_with("alpha,scheme,runs,ok,median_list_size,median_list_error"));
        assert_eq!(report.lines().count(), 3);
        tables.push(rows);
    }
    assert_eq!(tables[0], tables[1]);
}

fn run_default(out: &Path, args: &[&str]) -> Output {
    Command::new(BIN).args(args).arg("--out").arg(out).output().unwrap()
}

/// The default config is the standard instance (d=4, r=2, n=24, α=0.5, ℓ=4).
#[test]
fn standard_instance_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    for cmd in ["gen", "solve", "round", "oracle"] {
        let o = run_default(dir.path(), &[cmd, "--seed", "1"]);
        assert!(o.status.success(), "{cmd}: {}", stderr(&o));
    }
    assert_eq!(json(&dir.path().join("validation_s1.json"))["passed"], true);
    let err = json(&dir.path().join("candidates_s1.json"))["list_error"].as_f64().unwrap();
    assert!(err.is_finite());
    let orc = json(&dir.path().join("oracle_s1.json"));
    assert!(orc["list_error"].as_f64().unwrap() <= 1e-8);
}

#[test]
fn verify_reports_no_violations() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_default(dir.path(), &["verify"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v = json(&dir.path().join("verify.json"));
    assert!(v["failures"].as_array().unwrap().is_empty());
    let suite = v["suite"].as_array().unwrap();
    assert!(!suite.is_empty());
    for r in suite {
        assert_eq!(r["violations"], 0, "{r}");
    }
    assert_eq!(v["certificate"]["certified"], true);
}
