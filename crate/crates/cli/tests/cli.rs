mod common;

use std::fs;

use naim_core::builtins::scalar_conjugacy;

const DECOUPLED: &str = r#"{"system": {"kind": "decoupled"}, "epsilon": [0.1]}"#;

#[test]
fn decoupled_graph_column_is_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    let out = common::run("slow-manifold", DECOUPLED, dir.path(), &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = dir.path().join("out/slow-manifold_graph.csv");
    let xs = common::column(&csv, "x");
    let fs = common::column(&csv, "F_y");
    assert_eq!(xs.len(), 41);
    for (x, f) in xs.iter().zip(&fs) {
        assert!((f - (0.1 * x - 0.01)).abs() <= 1e-8, "{x}: {f}");
    }
    let meta = common::sidecar(&dir.path().join("out/slow-manifold.json"));
    assert_eq!(meta["schema_version"], 1);
    assert_eq!(meta["command"], "slow-manifold");
    assert_eq!(meta["tolerances"]["rtol"], 1e-9);
    assert_eq!(meta["config_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn expression_field_reproduces_the_builtin() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"{
        "system": {"kind": "expr", "slow": [{"name": "x1"}], "fast": ["y1"], "f": ["1"], "g": ["-y1 + eps*x1"]},
        "epsilon": [0.1],
        "grid": [{"kind": "line", "lo": -2, "hi": 8, "n": 41}]
    }"#;
    let out = common::run("slow-manifold", cfg, dir.path(), &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = dir.path().join("out/slow-manifold_graph.csv");
    for (x, f) in common::column(&csv, "x1").iter().zip(common::column(&csv, "F_y1")) {
        assert!((f - (0.1 * x - 0.01)).abs() <= 1e-8);
    }
}

#[test]
fn scalar_linearization_column() {
    let dir = tempfile::tempdir().unwrap();
    let out = common::run("linearize", r#"{"system": {"kind": "scalar-quadratic"}, "epsilon": [0]}"#, dir.path(), &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = dir.path().join("out/linearize_samples.csv");
    let ys = common::column(&csv, "y");
    assert!((ys[0] + 0.5).abs() < 1e-12 && (ys[ys.len() - 1] - 0.9).abs() < 1e-12);
    for (y, phi) in ys.iter().zip(common::column(&csv, "phi_1")) {
        let want = scalar_conjugacy(*y);
        assert!((phi - want).abs() <= 1e-6 * want.abs(), "{y}: {phi} vs {want}");
    }
    let meta = common::sidecar(&dir.path().join("out/linearize.json"));
    assert_eq!(meta["summary"]["runs"][0]["certified"], true);
    assert_eq!(meta["summary"]["runs"][0]["depth"], 6);
}

#[test]
fn pendulum_rates_are_nonresonant() {
    let dir = tempfile::tempdir().unwrap();
    let out = common::run("check-rates", r#"{"system": {"kind": "pendulum", "damping": {"law": "constant", "c0": 1}}}"#, dir.path(), &["--threads", "1"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let meta = common::sidecar(&dir.path().join("out/check-rates.json"));
    assert_eq!(meta["summary"]["runs"][0]["nonresonance_ok"], true);
    let csv = fs::read_to_string(dir.path().join("out/check-rates_report.csv")).unwrap();
    assert!(csv.lines().nth(1).unwrap().contains(",true,"));
}

#[test]
fn identical_runs_are_byte_identical() {
    let cfg = r#"{"system": {"kind": "decoupled"}, "fibers": {"samples": 6}}"#;
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let out = common::run("fibers", cfg, d.path(), &["--seed", "17"]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let read = |d: &tempfile::TempDir, f: &str| fs::read(d.path().join("out").join(f)).unwrap();
    assert_eq!(read(&a, "fibers_samples.csv"), read(&b, "fibers_samples.csv"));
    assert_eq!(read(&a, "fibers.json"), read(&b, "fibers.json"));

    let c = tempfile::tempdir().unwrap();
    assert!(common::run("fibers", cfg, c.path(), &["--seed", "18"]).status.success());
    assert_ne!(read(&a, "fibers_samples.csv"), read(&c, "fibers_samples.csv"));
    let hash = |d: &tempfile::TempDir| common::sidecar(&d.path().join("out/fibers.json"))["config_hash"].clone();
    assert_ne!(hash(&a), hash(&c));
}

#[test]
fn csv_uses_crlf_and_seventeen_digits() {
    let dir = tempfile::tempdir().unwrap();
    assert!(common::run("slow-manifold", DECOUPLED, dir.path(), &[]).status.success());
    let text = fs::read_to_string(dir.path().join("out/slow-manifold_graph.csv")).unwrap();
    assert!(text.ends_with("\r\n"));
    assert_eq!(text.matches("\r\n").count(), text.matches('\n').count());
    let first = text.lines().nth(1).unwrap();
    let x = first.split(',').nth(2).unwrap();
    assert_eq!(x, "-2.0000000000000000e0");
}

#[test]
fn sidecar_keys_are_sorted() {
    fn check(v: &serde_json::Value, text: &str) {
        if let Some(map) = v.as_object() {
            let keys: Vec<&String> = map.keys().collect();
            let mut sorted = keys.clone();
            sorted.sort();
            assert_eq!(keys, sorted);
            map.values().for_each(|c| check(c, text));
        }
    }
    let dir = tempfile::tempdir().unwrap();
    assert!(common::run("slow-manifold", DECOUPLED, dir.path(), &[]).status.success());
    let text = fs::read_to_string(dir.path().join("out/slow-manifold.json")).unwrap();
    // top-level keys in file order
    let top: Vec<&str> = text.lines().filter(|l| l.starts_with("  \"")).map(|l| l.trim().split('"').nth(1).unwrap()).collect();
    let mut sorted = top.clone();
    sorted.sort();
    assert_eq!(top, sorted);
    check(&common::sidecar(&dir.path().join("out/slow-manifold.json")), &text);
}

#[test]
fn hash_follows_meaning_not_spelling() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let c = tempfile::tempdir().unwrap();
    assert!(common::run("slow-manifold", DECOUPLED, a.path(), &[]).status.success());
    let same = r#"{"epsilon": [1e-1], "seed": 0, "system": {"kind": "decoupled"}, "grid": [{"kind": "line", "lo": -2.0, "hi": 8.0, "n": 41}], "output": {"dir": "ignored"}}"#;
    assert!(common::run("slow-manifold", same, b.path(), &[]).status.success());
    assert!(common::run("slow-manifold", r#"{"system": {"kind": "decoupled"}, "epsilon": [0.1], "manifold": {"sweeps": 9}}"#, c.path(), &[]).status.success());
    let hash = |d: &tempfile::TempDir| common::sidecar(&d.path().join("out/slow-manifold.json"))["config_hash"].clone();
    assert_eq!(hash(&a), hash(&b));
    assert_ne!(hash(&a), hash(&c));
}

#[test]
fn failures_leave_an_error_record() {
    let dir = tempfile::tempdir().unwrap();
    let out = common::run("slow-manifold", r#"{"system": {"kind": "decoupled"}, "epsilon": [0.1], "typo": 1}"#, dir.path(), &[]);
    assert!(!out.status.success());
    let rec = common::sidecar(&dir.path().join("out/error.json"));
    assert_eq!(rec["error"]["kind"], "config");
    assert!(rec["error"]["message"].as_str().unwrap().contains("typo"));

    let bad = r#"{"system": {"kind": "expr", "slow": [], "fast": ["y"], "f": [], "g": ["-y + q"]}}"#;
    let out = common::run("slow-manifold", bad, dir.path(), &[]);
    assert!(!out.status.success());
    let rec = common::sidecar(&dir.path().join("out/error.json"));
    assert_eq!(rec["error"]["kind"], "field");
    assert!(rec["error"]["message"].as_str().unwrap().contains("1:6: unknown identifier 'q'"), "{rec}");

    // a solver failure carries the core category and the config hash
    let diverging = r#"{"system": {"kind": "expr", "slow": [], "fast": ["y"], "f": [], "g": ["y"]}}"#;
    let out = common::run("linearize", diverging, dir.path(), &[]);
    assert!(!out.status.success());
    let rec = common::sidecar(&dir.path().join("out/error.json"));
    assert!(rec["error"]["kind"].as_str().unwrap().starts_with("core."), "{rec}");
    assert_eq!(rec["config_hash"].as_str().unwrap().len(), 64);

    // success clears a stale record
    assert!(common::run("slow-manifold", DECOUPLED, dir.path(), &[]).status.success());
    assert!(!dir.path().join("out/error.json").exists());
}

#[test]
fn pendulum_command_needs_the_pendulum() {
    let dir = tempfile::tempdir().unwrap();
    let out = common::run("pendulum", DECOUPLED, dir.path(), &[]);
    assert!(!out.status.success());
    assert_eq!(common::sidecar(&dir.path().join("out/error.json"))["error"]["kind"], "config");
}
