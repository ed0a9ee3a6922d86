use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_multibump");

const SLOW_DECAY: &str = "\
[grid]
N = 2
L = 17.55
M = 235

[potential]
family = \"slow_decay\"
A = 1.0
m = 2.0
";

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(BIN)
        .current_dir(dir)
        .env_remove("MULTIBUMP_OUT_DIR")
        .env_remove("MULTIBUMP_WORKERS")
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) -> String {
    let stdout = String::from_utf8_lossy(&out.stdout).into_owned();
    assert!(out.status.success(), "stdout:\n{stdout}\nstderr:\n{}", String::from_utf8_lossy(&out.stderr));
    stdout
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn run_dirs(base: &Path) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = match fs::read_dir(base) {
        Ok(rd) => rd.map(|e| e.unwrap().path()).collect(),
        Err(_) => Vec::new(),
    };
    v.sort();
    v
}

#[test]
fn groundstate_summary_has_unit_decay() {
    let tmp = tempfile::tempdir().unwrap();
    ok(&run(tmp.path(), &["groundstate", "--out-dir", "out"]));
    let dirs = run_dirs(&tmp.path().join("out"));
    assert_eq!(dirs.len(), 1);
    let s = json(&dirs[0].join("summary.json"));
    let exponent = s["decay_exponent"].as_f64().unwrap();
    assert!((exponent - 1.0).abs() < 0.02, "exponent {exponent}");
    for key in ["delta", "R_delta", "E_inf", "d0"] {
        assert!(s[key].as_f64().unwrap() > 0.0, "{key}");
    }
    let profile = fs::read_to_string(dirs[0].join("profile.csv")).unwrap();
    assert!(profile.starts_with("r,w\n"));
    let m = json(&dirs[0].join("manifest.json"));
    assert_eq!(m["config_sha256"].as_str().unwrap().len(), 64);
    assert_eq!(m["command"], "groundstate");
    assert!(m["seeds"]["surrogate"].is_u64());
}

#[test]
fn sech_validation_report() {
    let tmp = tempfile::tempdir().unwrap();
    let out = ok(&run(tmp.path(), &["groundstate", "--validate", "--set", "grid.N=1", "--out-dir", "out"]));
    assert!(out.contains("sech comparison"));
    let dir = &run_dirs(&tmp.path().join("out"))[0];
    let v = json(&dir.join("validation.json"));
    assert!(v["max_error"].as_f64().unwrap() < 1e-6);
    assert_eq!(v["passed"], true);
}

#[test]
fn supercritical_exponent_is_rejected_before_compute() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(tmp.path(), &["groundstate", "--set", "grid.N=3", "--set", "problem.p=5", "--out-dir", "out"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("subcritical"));
    assert!(!tmp.path().join("out").exists());
}

#[test]
fn bad_keys_and_values_are_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    for set in ["grid.width=3", "minimax.k=0", "solver.tol_grad_rel=-1", "potential.family=cubic"] {
        let out = run(tmp.path(), &["groundstate", "--set", set, "--out-dir", "out"]);
        assert_eq!(out.status.code(), Some(2), "{set}");
    }
    assert!(!tmp.path().join("out").exists());
}

#[test]
fn single_bump_minimum_and_resume() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("one.csv"), "# one center\n0, 0\n").unwrap();
    let out = ok(&run(tmp.path(), &["minimize", "--centers", "one.csv", "--out-dir", "out"]));
    assert!(out.contains("f_1 = "));
    assert!(out.contains("max|lambda|"));
    let first = run_dirs(&tmp.path().join("out")).pop().unwrap();
    let rec = json(&first.join("result.json"));
    let f1 = rec["value"].as_f64().unwrap();
    let e_inf = multibump::groundstate::energy_limit(
        &multibump::groundstate::solve_radial(3.0, 1.0, 2, 30.0, 1e-8).unwrap(),
    );
    // the default grid has spacing 0.094; the discretisation bias is about 0.2 h²
    assert!(((f1 - e_inf) / e_inf).abs() < 3e-3, "f1 {f1} vs {e_inf}");
    assert!(first.join("field.bin").is_file());

    let before = fs::read(first.join("result.json")).unwrap();
    let resume = first.to_str().unwrap().to_string();
    ok(&run(tmp.path(), &["minimize", "--resume", &resume, "--out-dir", "out"]));
    let dirs = run_dirs(&tmp.path().join("out"));
    assert_eq!(dirs.len(), 2);
    assert_eq!(fs::read(first.join("result.json")).unwrap(), before);
    let again = json(&dirs[1].join("result.json"))["value"].as_f64().unwrap();
    assert!((again - f1).abs() <= 1e-10 * f1.abs(), "{again} vs {f1}");
}

#[test]
fn malformed_centers_name_the_row() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("bad.csv"), "0,0\n1,x\n").unwrap();
    let out = run(tmp.path(), &["minimize", "--centers", "bad.csv", "--out-dir", "out"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("row 2"), "{}", stderr(&out));
    fs::write(tmp.path().join("short.csv"), "0,0\n1\n").unwrap();
    let out = run(tmp.path(), &["minimize", "--centers", "short.csv", "--out-dir", "out"]);
    assert!(stderr(&out).contains("row 2"));
    assert!(!tmp.path().join("out").exists());
}

#[test]
fn close_centers_report_pair_and_distance() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("close.csv"), "0,0\n5,0\n").unwrap();
    let out = run(tmp.path(), &["minimize", "--centers", "close.csv", "--out-dir", "out"]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr(&out);
    assert!(err.contains("centers 0 and 1") && err.contains("5.0000"), "{err}");
}

#[test]
fn sweep_has_positive_gaps_and_diagnoses() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("slow.toml"), SLOW_DECAY).unwrap();
    ok(&run(tmp.path(), &["-c", "slow.toml", "sweep", "--k-lo", "2", "--k-hi", "3", "--out-dir", "out"]));
    let sweep = run_dirs(&tmp.path().join("out")).pop().unwrap();
    let table = fs::read_to_string(sweep.join("table.csv")).unwrap();
    let mut lines = table.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let col = |name: &str| header.iter().position(|h| *h == name).unwrap();
    let rows: Vec<Vec<f64>> =
        lines.map(|l| l.split(',').take(header.len() - 1).map(|x| x.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 2);
    for (row, k) in rows.iter().zip([2.0, 3.0]) {
        assert_eq!(row[col("k")], k);
        assert!(row[col("g")] > row[col("k_e_inf")], "{row:?}");
    }
    for k in ["k-002", "k-003"] {
        assert!(sweep.join(k).join("trace.jsonl").is_file());
        assert!(sweep.join(k).join("field.bin").is_file());
    }

    let listing = |d: &Path| {
        let mut v: Vec<_> = walk(d).into_iter().map(|p| (p.clone(), fs::read(&p).unwrap())).collect();
        v.sort();
        v
    };
    let snapshot = listing(&sweep);
    let s = sweep.to_str().unwrap().to_string();
    ok(&run(tmp.path(), &["diagnose", &s, "--out-dir", "diag"]));
    assert_eq!(listing(&sweep), snapshot);
    let diag = run_dirs(&tmp.path().join("diag")).pop().unwrap();
    let report = json(&diag.join("asymptotics.json"));
    assert_eq!(report["records"].as_array().unwrap().len(), 2);
    let csv = fs::read_to_string(diag.join("asymptotics.csv")).unwrap();
    assert!(csv.starts_with("k,f_k,ratio,gamma,lambda,max_lambda"));
}

fn walk(d: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    for e in fs::read_dir(d).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            out.extend(walk(&p));
        } else {
            out.push(p);
        }
    }
    out
}

#[test]
fn diagnose_empty_dir_writes_nothing() {
    let tmp = tempfile::tempdir().unwrap();
    fs::create_dir(tmp.path().join("empty")).unwrap();
    let out = run(tmp.path(), &["diagnose", "empty", "--out-dir", "diag"]);
    assert!(!out.status.success());
    assert!(!tmp.path().join("diag").exists());
    assert!(fs::read_dir(tmp.path().join("empty")).unwrap().next().is_none());
}

#[test]
fn diagnose_skips_incomplete_results() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("one.csv"), "0,0\n").unwrap();
    ok(&run(tmp.path(), &["minimize", "--centers", "one.csv", "--set", "output.checkpoint=false", "--out-dir", "runs"]));
    ok(&run(tmp.path(), &["minimize", "--centers", "one.csv", "--out-dir", "runs"]));
    let out = run(tmp.path(), &["diagnose", "runs", "--out-dir", "diag"]);
    ok(&out);
    assert!(stderr(&out).contains("warning: skipping"));
    let diag = run_dirs(&tmp.path().join("diag")).pop().unwrap();
    assert_eq!(json(&diag.join("asymptotics.json"))["records"].as_array().unwrap().len(), 1);
}

#[test]
fn surrogate_sweep_needs_no_fields() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("slow.toml"), SLOW_DECAY).unwrap();
    ok(&run(tmp.path(), &["-c", "slow.toml", "sweep", "--k-lo", "64", "--k-hi", "64", "--surrogate-only", "--out-dir", "out"]));
    let dir = run_dirs(&tmp.path().join("out")).pop().unwrap();
    let eq = fs::read_to_string(dir.join("equidistribution.csv")).unwrap();
    assert_eq!(eq.lines().count(), 3);
    assert!(dir.join("centers").join("k-064.csv").is_file());
    assert!(walk(&dir).iter().all(|p| p.extension().is_none_or(|e| e != "bin")));
}

#[test]
fn environment_overrides() {
    let tmp = tempfile::tempdir().unwrap();
    let out = Command::new(BIN)
        .current_dir(tmp.path())
        .env("MULTIBUMP_OUT_DIR", tmp.path().join("env-out"))
        .env("MULTIBUMP_WORKERS", "2")
        .args(["groundstate"])
        .output()
        .unwrap();
    ok(&out);
    let dirs = run_dirs(&tmp.path().join("env-out"));
    assert_eq!(dirs.len(), 1);
    assert_eq!(json(&dirs[0].join("manifest.json"))["workers"], 2);

    let out = Command::new(BIN).current_dir(tmp.path()).env("MULTIBUMP_WORKERS", "many").args(["groundstate"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn runs_never_reuse_directories() {
    let tmp = tempfile::tempdir().unwrap();
    ok(&run(tmp.path(), &["groundstate", "--out-dir", "out"]));
    let first = run_dirs(&tmp.path().join("out"));
    let manifest = fs::read(first[0].join("manifest.json")).unwrap();
    ok(&run(tmp.path(), &["groundstate", "--set", "problem.safety=0.8", "--out-dir", "out"]));
    let dirs = run_dirs(&tmp.path().join("out"));
    assert_eq!(dirs.len(), 2);
    assert_eq!(fs::read(first[0].join("manifest.json")).unwrap(), manifest);
    let a = json(&dirs[0].join("manifest.json"));
    let b = json(&dirs[1].join("manifest.json"));
    assert_ne!(a["config_sha256"], b["config_sha256"]);
}
