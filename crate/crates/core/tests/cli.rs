use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_fakedist"))
}

fn shipped(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).env_remove("FAKEDIST_THREADS").output().unwrap()
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let p = dir.join("cfg.json");
    std::fs::write(&p, body).unwrap();
    p
}

fn hyperbolic3(dir: &Path) -> PathBuf {
    write_config(
        dir,
        r#"{ "schema": 1, "seed": 3,
             "geometry": { "kind": "radial", "m": 3, "eps_pole": 0.01, "t_out": 4.0, "n": 400 },
             "profile": { "kind": "constant", "kappa2": 1.0 }, "p": 2.0 }"#,
    )
}

fn csv(path: &Path) -> Vec<Vec<f64>> {
    std::fs::read_to_string(path).unwrap().lines().skip(1).map(|l| l.split(',').map(|x| x.parse().unwrap()).collect()).collect()
}

#[test]
fn model_tables_match_closed_forms() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = hyperbolic3(dir.path());
    let out = dir.path().join("a");
    let o = run(&["model", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = csv(&out.join("model.csv"));
    assert_eq!(rows.len(), 200);
    let pi = std::f64::consts::PI;
    for r in rows.iter().step_by(17) {
        let t = r[0];
        assert!((r[1] / t.sinh() - 1.0).abs() < 1e-8);
        assert!((r[2] / (4.0 * pi * t.sinh().powi(2)) - 1.0).abs() < 1e-8);
        let big = pi * ((2.0 * t).sinh() - 2.0 * t);
        assert!((r[3] / big - 1.0).abs() < 1e-6);
        assert!((r[4] / ((1.0 / t.tanh() - 1.0) / (4.0 * pi)) - 1.0).abs() < 1e-6);
    }
    // byte-identical rerun
    let again = dir.path().join("b");
    run(&["model", "--config", cfg.to_str().unwrap(), "--out", again.to_str().unwrap()]);
    for f in ["model.csv", "model.json"] {
        assert_eq!(std::fs::read(out.join(f)).unwrap(), std::fs::read(again.join(f)).unwrap());
    }
}

#[test]
fn parabolic_request_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{ "schema": 1, "geometry": { "kind": "radial", "m": 2, "eps_pole": 0.01, "t_out": 4.0, "n": 100 },
             "profile": { "kind": "constant", "kappa2": 0.0 }, "p": 2.0 }"#,
    );
    let o = run(&["model", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("parabolic"));
}

#[test]
fn config_and_io_failures_exit_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let missing = write_config(
        dir.path(),
        r#"{ "schema": 1, "geometry": { "kind": "mesh-file", "path": "/nonexistent/surface.off" },
             "profile": { "kind": "constant", "kappa2": 1.0 } }"#,
    );
    assert_eq!(run(&["solve", "--config", missing.to_str().unwrap(), "--out", d]).status.code(), Some(3));

    let typo = write_config(dir.path(), "{ \"schema\": 1,\n  \"geometry\": { \"kind\": \"radial\", \"m\": 2, \"eps_pole\": 0.01, \"t_out\": 4.0, \"n\": 100 },\n  \"profle\": {} }");
    let o = run(&["solve", "--config", typo.to_str().unwrap(), "--out", d]);
    assert_eq!(o.status.code(), Some(3));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line 3") && err.contains("profle"), "{err}");

    let old = write_config(
        dir.path(),
        r#"{ "schema": 7, "geometry": { "kind": "radial", "m": 2, "eps_pole": 0.01, "t_out": 4.0, "n": 100 },
             "profile": { "kind": "constant", "kappa2": 0.0 } }"#,
    );
    assert_eq!(run(&["solve", "--config", old.to_str().unwrap(), "--out", d]).status.code(), Some(3));
    assert_eq!(run(&["solve", "--config", "/nonexistent.json", "--out", d]).status.code(), Some(3));
    assert_eq!(run(&["report", "--out", "/nonexistent"]).status.code(), Some(3));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(3));

    let cfg = hyperbolic3(dir.path());
    let o = bin().args(["model", "--config", cfg.to_str().unwrap(), "--out", d]).env("FAKEDIST_THREADS", "many").output().unwrap();
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn solve_and_refine() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = hyperbolic3(dir.path());
    let out = dir.path().join("s");
    let o = run(&["solve", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--threads", "2", "--refine", "1"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let summary: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("solve.json")).unwrap()).unwrap();
    assert_eq!(summary["mesh"], "radial-m3-n801");
    let rows = csv(&out.join("field.csv"));
    assert_eq!(rows.len(), 801);
    // ρ = r on the model itself
    for r in rows.iter().skip(1).step_by(50) {
        assert!((r[4] / r[2] - 1.0).abs() < 1e-3, "{r:?}");
    }
}

#[test]
fn flat_demo_passes_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = shipped("flat_radial.json");
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = run(&["verify", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    }
    for f in ["audits.json", "levels.csv"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap());
    }
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(a.join("audits.json")).unwrap()).unwrap();
    assert_eq!(report["hard_failures"], 0);
    assert!(report["audits"].as_array().unwrap().len() >= 10);
    let levels = csv(&a.join("levels.csv"));
    assert_eq!(levels.len(), 10);
    let o = run(&["report", "--out", a.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&o.stdout).contains("perimeter-identity"));

    let o = run(&["flow", "--config", cfg.to_str().unwrap(), "--out", a.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let flow: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(a.join("flow.json")).unwrap()).unwrap();
    assert_eq!(flow["p_list"].as_array().unwrap().len(), 10);
}

#[test]
fn failed_hard_audit_is_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    // a Sobolev constant far below the sharp one breaks the decay bound
    let cfg = write_config(
        dir.path(),
        r#"{ "schema": 1, "geometry": { "kind": "radial", "m": 2, "eps_pole": 0.01, "t_out": 4.0, "n": 400 },
             "profile": { "kind": "constant", "kappa2": 0.0 }, "sobolev": 1e-6, "audits": ["decay"] }"#,
    );
    let out = dir.path().join("v");
    let o = run(&["verify", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(4), "{}", String::from_utf8_lossy(&o.stdout));
    assert_eq!(run(&["report", "--out", out.to_str().unwrap()]).status.code(), Some(4));
}
