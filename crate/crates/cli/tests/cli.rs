use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_chaos-descent"))
}

fn configs() -> &'static Path {
    Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs"))
}

#[test]
fn compare_writes_run_directory() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("small.cfg");
    std::fs::write(&cfg, "experiment = fig1b\nrun.trials = 2\nsolver.iterations = 30\n").unwrap();
    let out = dir.path().join("run");
    let status = bin()
        .args(["compare", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    for f in ["manifest.json", "benchmark_coefficients.csv", "gd/aggregate.csv", "sa/trial_0001.csv"] {
        assert!(out.join(f).exists(), "{f}");
    }
}

#[test]
fn bad_config_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "solver.unknown = 3\n").unwrap();
    let out = bin().args(["solve", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(!out.stderr.is_empty());
}

#[test]
fn solve_json_has_trace_fields() {
    let out = bin()
        .args(["solve", "--format", "json", "--config"])
        .arg(configs().join("fig1a_agd.cfg"))
        .output()
        .unwrap();
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(v.to_string().contains("err_trunc_sq"));
}

#[test]
fn coeffs_prints_table() {
    let out = bin().args(["coeffs", "--level", "8"]).output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 10);
    assert!(text.starts_with("index,coefficient"));
}

#[test]
fn verify_passes() {
    let out = bin().args(["verify", "--repeats", "500"]).output().unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
}
