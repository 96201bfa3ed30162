use std::path::Path;
use std::process::{Command, Output};

fn fraglab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fraglab")).args(args).output().expect("binary runs")
}

fn configs() -> &'static Path {
    Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs"))
}

#[test]
fn malformed_config_reports_line_and_key() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, "experiment = \"simulate\"\n\n[budget]\nn_reps = -3\n").unwrap();
    let out = fraglab(&["experiment", "run", path.to_str().unwrap()]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 4") && err.contains("n_reps"), "{err}");

    std::fs::write(&path, "experiment = \"simulate\"\n[process]\nalpha = 0.0\nbeta = 1.0\n").unwrap();
    let out = fraglab(&["experiment", "run", path.to_str().unwrap()]);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(!out.status.success() && err.contains("beta"), "{err}");
}

#[test]
fn config_runs_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let cfg = configs().join("simulate.toml");
    for dir in [&a, &b] {
        let out = fraglab(&["experiment", "run", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    for f in ["masses.csv", "tally.csv", "manifest.json"] {
        assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn seed_flag_changes_the_draws() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for (dir, seed) in [(&a, "1"), (&b, "2")] {
        let out = fraglab(&["simulate", "--u0", "1,2", "--t", "2", "--reps", "5", "--eps", "0.01", "--seed", seed, "--out", dir.path().to_str().unwrap()]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    assert_ne!(std::fs::read(a.path().join("masses.csv")).unwrap(), std::fs::read(b.path().join("masses.csv")).unwrap());
}

#[test]
fn gate_and_phi_subcommands() {
    let out = fraglab(&["gate", "--alpha", "-2", "--immigration", "powerlaw:2.5:1"]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("no"));

    let dir = tempfile::tempdir().unwrap();
    let out = fraglab(&["phi", "--q", "1,2", "--out", dir.path().to_str().unwrap()]);
    assert!(out.status.success());
    let csv = std::fs::read_to_string(dir.path().join("phi.csv")).unwrap();
    assert_eq!(csv, "q,phi\n1,0.3333333333333333\n2,0.5\n");

    let out = fraglab(&["report", "--immigration", "powerlaw:2.5:1"]);
    let json: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(json["immigration"]["alpha_i"], -1.5);
    assert_eq!(json["gate"]["exists"], "yes");
}

#[test]
fn bad_arguments_are_rejected() {
    let out = fraglab(&["simulate", "--immigration", "powerlaw:2.5"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("powerlaw:2.5"));
    let out = fraglab(&["stationary", "--alpha", "-2", "--immigration", "powerlaw:2.5:1", "--reps", "2"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("gate"));
}
