use std::collections::BTreeSet;
use std::path::Path;
use std::process::Command;

use lure_smo::config::bundled;
use serde_json::Value;

fn run(args: &[&str], out: &Path) -> (i32, String) {
    let o = Command::new(env!("CARGO_BIN_EXE_lure-smo"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env("RUST_LOG", "error")
        .output()
        .expect("spawn lure-smo");
    (o.status.code().expect("exit code"), String::from_utf8_lossy(&o.stdout).into_owned())
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn key_paths(v: &Value, prefix: &str, acc: &mut BTreeSet<String>) {
    if let Value::Object(map) = v {
        for (k, child) in map {
            let path = format!("{prefix}/{k}");
            acc.insert(path.clone());
            key_paths(child, &path, acc);
        }
    }
}

fn keys(v: &Value) -> BTreeSet<String> {
    let mut acc = BTreeSet::new();
    key_paths(v, "", &mut acc);
    acc
}

#[test]
fn check_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(&["check"], dir.path()).0, 0);
    assert_eq!(json(&dir.path().join("check_report.json"))["all_pass"], true);

    assert_eq!(run(&["check", "--gamma", "9.8"], dir.path()).0, 1);
    assert_eq!(json(&dir.path().join("check_report.json"))["all_pass"], false);

    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, bundled::EXAMPLE2_SYSTEM.replace("[0.0, 0.0, -1.0]", "[0.0, -1.0]")).unwrap();
    assert_eq!(run(&["check", "--system", bad.to_str().unwrap()], dir.path()).0, 2);
    assert_eq!(run(&["check", "--system", "/nonexistent/system.toml"], dir.path()).0, 2);
}

#[test]
fn outputs_are_byte_identical_across_runs() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [a.path(), b.path()] {
        assert_eq!(run(&["example2", "--horizon", "5"], dir).0, 0);
        assert_eq!(run(&["example1"], dir).0, 0);
        assert_eq!(run(&["reduced-demo", "--horizon", "5"], dir).0, 0);
    }
    let mut names: Vec<_> = std::fs::read_dir(a.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert!(names.len() >= 9, "{names:?}");
    for name in names {
        let x = std::fs::read(a.path().join(&name)).unwrap();
        let y = std::fs::read(b.path().join(&name)).unwrap();
        assert!(x == y, "{name:?} differs");
    }
}

#[test]
fn short_horizon_keeps_the_report_schema() {
    let short = tempfile::tempdir().unwrap();
    let full = tempfile::tempdir().unwrap();
    assert_eq!(run(&["example2", "--horizon", "1"], short.path()).0, 0);
    assert_eq!(run(&["example2"], full.path()).0, 0);
    let s = json(&short.path().join("example2_report.json"));
    let f = json(&full.path().join("example2_report.json"));
    assert_eq!(s["schema"], 1);
    assert_eq!(keys(&s), keys(&f));
    let header = |d: &Path| std::fs::read_to_string(d.join("example2_trajectory.csv")).unwrap().lines().next().unwrap().to_string();
    assert_eq!(header(short.path()), header(full.path()));
}

#[test]
fn oversized_beta_refuses_the_certificate_but_completes() {
    let dir = tempfile::tempdir().unwrap();
    let (code, stdout) = run(&["example2", "--horizon", "2", "--beta", "9"], dir.path());
    assert_eq!(code, 0);
    assert!(stdout.contains("certificate refused"), "{stdout}");
    let r = json(&dir.path().join("example2_report.json"));
    assert_eq!(r["certificate"]["issued"], false);
    assert!(r["certificate"]["refused_reason"].is_string());
    assert!(r["certificate"]["certificate"].is_null());
}

#[test]
fn reduced_demo_with_failing_epsilon_does_not_simulate() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(&["reduced-demo", "--epsilon", "4"], dir.path()).0, 1);
    let r = json(&dir.path().join("reduced_demo_report.json"));
    assert_eq!(r["simulated"], false);
    assert_eq!(r["check"]["all_pass"], false);
    assert!(!dir.path().join("reduced_demo_trajectory.csv").exists());
}

#[test]
fn reduced_demo_started_on_the_true_state_has_zero_error() {
    // K = 0 for the bundled gains, so z(0) = x2(0) = -2.
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(&["reduced-demo", "--zhat0=-2"], dir.path()).0, 0);
    let csv = std::fs::read_to_string(dir.path().join("reduced_demo_trajectory.csv")).unwrap();
    let mut lines = csv.lines();
    let col = lines.next().unwrap().split(',').position(|h| h == "ez_norm").unwrap();
    let mut rows = 0;
    for line in lines {
        let ez: f64 = line.split(',').nth(col).unwrap().parse().unwrap();
        assert_eq!(ez, 0.0);
        rows += 1;
    }
    assert_eq!(rows, 30_001);
}

#[test]
fn guided_sign_reduces_injection_chattering() {
    let exact = tempfile::tempdir().unwrap();
    let guided = tempfile::tempdir().unwrap();
    assert_eq!(run(&["example2"], exact.path()).0, 0);
    assert_eq!(run(&["example2", "--sign-mode", "guided"], guided.path()).0, 0);
    let rate = |d: &Path| json(&d.join("example2_report.json"))["measured"]["injection_chattering"]["switch_count_per_unit_time"].as_f64().unwrap();
    let (e, g) = (rate(exact.path()), rate(guided.path()));
    assert!(g < e, "guided {g} exact {e}");
}

#[test]
fn unknown_sign_mode_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(&["example2", "--sign-mode", "bogus"], dir.path()).0, 2);
}
