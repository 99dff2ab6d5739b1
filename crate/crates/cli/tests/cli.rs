use serde_json::Value;
use std::path::Path;
use std::process::{Command, Output};

fn edlmm(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_edlmm"))
        .args(args)
        .current_dir(dir)
        .env_remove("EDLMM_OUT_DIR")
        .output()
        .expect("binary runs")
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn strs(v: &Value) -> Vec<&str> {
    v.as_array().unwrap().iter().map(|x| x.as_str().unwrap()).collect()
}

#[test]
fn bdf3_json_has_table_columns() {
    let dir = tempfile::tempdir().unwrap();
    let out = edlmm(dir.path(), &["scheme", "bdf", "--k", "3", "--out", "bdf3.json"]);
    assert!(out.status.success());
    let v = json(&dir.path().join("bdf3.json"));
    assert_eq!(strs(&v["A"]), ["11/6", "-3", "3/2", "-1/3"]);
    assert_eq!(strs(&v["reformed"]["a"]), ["11/6", "-7/6", "1/3"]);
    assert_eq!(strs(&v["reformed"]["bhat"]), ["2", "-1", "0"]);
    assert_eq!(v["config"]["k"], 3);
}

#[test]
fn from_params_matches_builtin_sixth_order() {
    let dir = tempfile::tempdir().unwrap();
    let w = "64/5,-141/5,111,-1034,9886,-23/100";
    assert!(edlmm(dir.path(), &["scheme", "from-params", "--w", w, "--out", "a.json"]).status.success());
    assert!(edlmm(dir.path(), &["scheme", "lmm6-paper", "--out", "b.json"]).status.success());
    let (a, b) = (json(&dir.path().join("a.json")), json(&dir.path().join("b.json")));
    for key in ["A", "B", "Bhat"] {
        assert_eq!(a[key], b[key]);
    }
    assert_eq!(strs(&b["A"])[0], "2617/200");
}

#[test]
fn bdf6_certification_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    edlmm(dir.path(), &["scheme", "bdf", "--k", "6", "--out", "bdf6.json"]);
    let out = edlmm(
        dir.path(),
        &["certify", "--scheme", "bdf6.json", "--ell-f", "1", "--zeta", "1", "--eta", "1", "--out", "r.json"],
    );
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("minimum of T(x; a)") && err.contains("not positive"), "{err}");
    let v = json(&dir.path().join("r.json"));
    assert_eq!(v["refused"], true);
    assert!(v["alpha_max"].as_f64().unwrap() < 0.0);
}

#[test]
fn sixth_order_certificate_via_cli() {
    let dir = tempfile::tempdir().unwrap();
    edlmm(dir.path(), &["scheme", "lmm6-paper", "--out", "l6.json"]);
    let out = edlmm(dir.path(), &["certify", "--scheme", "l6.json", "--ell-f", "2", "--zeta", "1", "--eta", "1"]);
    assert!(out.status.success());
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!((v["alpha_max"].as_f64().unwrap() - 1.0).abs() < 1e-9);
    assert_eq!(v["G_dim"], 5);
    assert_eq!(v["G_a"].as_array().unwrap().len(), 25);
    assert!((v["G_a"][0].as_f64().unwrap() - 11.525734).abs() < 1e-5);
}

#[test]
fn barrier_verify_prints_exact_value() {
    let dir = tempfile::tempdir().unwrap();
    let out = edlmm(dir.path(), &["barrier", "verify"]);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.starts_with("PASS"), "{text}");
    assert!(text.contains("-107/112 + 107/336·sqrt(3)"), "{text}");
    assert!(text.contains("[5, 9, 11, 13]"));
}

#[test]
fn usage_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = edlmm(dir.path(), &["certify", "--bogus"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!out.stderr.is_empty());
    let out = edlmm(
        dir.path(),
        &["certify", "--scheme", "missing.json", "--ell-f", "1", "--zeta", "1", "--eta", "1"],
    );
    assert_eq!(out.status.code(), Some(2));
    let out = edlmm(dir.path(), &["scheme", "bdf", "--k", "9"]);
    assert_eq!(out.status.code(), Some(2));
    let out = edlmm(dir.path(), &["simulate", "--model", "ac", "--grid", "7"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("run.cfg"), "# defaults\nk = 2\nout = cfg.json\n").unwrap();
    let out = edlmm(dir.path(), &["--config", "run.cfg", "scheme", "bdf", "--k", "4"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v = json(&dir.path().join("cfg.json"));
    assert_eq!(v["k"], 4);
    assert_eq!(v["config"]["out"], "cfg.json");
}

#[test]
fn output_directory_override() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_edlmm"))
        .args(["scheme", "bdf", "--k", "2", "--out", "b.json"])
        .current_dir(dir.path())
        .env("EDLMM_OUT_DIR", "results")
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(dir.path().join("results/b.json").exists());
}

#[test]
fn simulation_is_deterministic_and_writes_snapshots() {
    let args = [
        "simulate", "--model", "pfc", "--grid", "16", "--domain", "32", "--tau", "0.05", "--T", "1",
        "--seed", "3", "--trace", "trace.csv", "--summary", "summary.json", "--snapshots", "every:10",
    ];
    let (d1, d2) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for d in [&d1, &d2] {
        let out = edlmm(d.path(), &args);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let read = |d: &tempfile::TempDir, f: &str| std::fs::read(d.path().join(f)).unwrap();
    for f in ["trace.csv", "summary.json", "snapshots/snapshot_00000010.bin", "snapshots/snapshot_00000010.json"] {
        assert_eq!(read(&d1, f), read(&d2, f), "{f} differs between identical runs");
    }

    let text = String::from_utf8(read(&d1, "trace.csv")).unwrap();
    assert!(text.contains("# model=pfc\n"));
    let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows[0], "step,t,E,E_G,mass,max_abs");
    assert_eq!(rows.len(), 22);
    // E_G appears once the six-step window is full.
    assert!(rows[5].split(',').nth(3).unwrap().is_empty());
    assert!(!rows[6].split(',').nth(3).unwrap().is_empty());

    let (meta, data) = edlmm::pde::read_snapshot(&d1.path().join("snapshots/snapshot_00000020.bin")).unwrap();
    assert_eq!(meta.grid, vec![16, 16]);
    assert_eq!(meta.domain, vec![32.0, 32.0]);
    assert!((meta.t - 1.0).abs() < 1e-12);
    assert_eq!(data.len(), 256);

    let s = json(&d1.path().join("summary.json"));
    assert_eq!(s["steps"], 20);
    assert!(s["mass_drift"].as_f64().unwrap() < 1e-12);
    assert!(s["warnings"][0].as_str().unwrap().contains("tau_max"));
}

#[test]
fn convergence_table_layout() {
    let dir = tempfile::tempdir().unwrap();
    let out = edlmm(
        dir.path(),
        &["converge", "--example", "pfc", "--N", "20,40", "--grid", "8", "--out", "t.csv"],
    );
    assert!(out.status.success());
    let text = std::fs::read_to_string(dir.path().join("t.csv")).unwrap();
    let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows[0], "N,tau,e_inf,rate_inf,e_2,rate_2");
    let rate: f64 = rows[2].split(',').nth(3).unwrap().parse().unwrap();
    assert!((5.5..6.5).contains(&rate), "{rate}");
}

#[test]
fn stability_commands() {
    let dir = tempfile::tempdir().unwrap();
    edlmm(dir.path(), &["scheme", "bdf", "--k", "2", "--out", "b2.json"]);
    let out = edlmm(dir.path(), &["stability", "angle", "--scheme", "b2.json"]);
    assert!(out.status.success());
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["zero_stable"], true);
    assert!((v["angle_deg"].as_f64().unwrap() - 90.0).abs() < 1e-3);

    let out = edlmm(
        dir.path(),
        &[
            "stability", "slice", "--scheme", "b2.json", "--plane", "implicit", "--nx", "3", "--ny", "3",
            "--window", "-2,2,-1,1", "--out", "s.csv",
        ],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(dir.path().join("s.csv")).unwrap();
    let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows.len(), 10);
    // z = -2 on the negative real axis is inside the region of an A-stable method.
    assert!(rows[4].starts_with("-2.0000000000000000e0,0.0000000000000000e0,1"), "{}", rows[4]);
}
