use std::path::Path;
use std::process::{Command, Output};

fn qcmatch(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qcmatch")).args(args).current_dir(dir).output().unwrap()
}

fn setup(dir: &Path) {
    let gen = qcmatch(dir, &["gen", "--na", "4", "--nb", "4", "--density", "0.7", "--seed", "2", "--out", "inst.json"]);
    assert!(gen.status.success(), "{}", String::from_utf8_lossy(&gen.stderr));
    let solve = qcmatch(dir, &["solve", "--instance", "inst.json", "--out", "sol.json"]);
    assert!(solve.status.success(), "{}", String::from_utf8_lossy(&solve.stderr));
}

#[test]
fn gen_solve_run_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    setup(dir.path());
    let run = qcmatch(
        dir.path(),
        &["run", "--alg", "apx", "--instance", "inst.json", "--solution", "sol.json", "--trials", "20000", "--seed", "1", "--out", "run.json"],
    );
    assert_eq!(run.status.code(), Some(0), "{}", String::from_utf8_lossy(&run.stderr));
    for f in ["inst.json", "sol.json", "run.json"] {
        assert!(dir.path().join(f).exists(), "{f} missing");
    }
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("run.json")).unwrap()).unwrap();
    let apx = &report["algorithms"][0];
    assert_eq!(apx["algorithm"], "apx");
    assert!(apx["branch"].is_string());
    assert!(apx["mean"].as_f64().unwrap() > 0.0);
    assert!(report["lp_objective"].as_f64().unwrap() > 0.0);
}

#[test]
fn lambda_out_of_range_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    setup(dir.path());
    let out = qcmatch(
        dir.path(),
        &["run", "--alg", "apx", "--instance", "inst.json", "--solution", "sol.json", "--trials", "10", "--seed", "1", "--lambda", "1.5", "--out", "run.json"],
    );
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("lambda must lie in [0,1]"), "{stderr}");
    assert_eq!(stderr.trim().lines().count(), 1);
}

#[test]
fn seed_is_mandatory() {
    let dir = tempfile::tempdir().unwrap();
    setup(dir.path());
    let out = qcmatch(dir.path(), &["gen", "--out", "x.json"]);
    assert_eq!(out.status.code(), Some(2));
    let out = qcmatch(dir.path(), &["run", "--alg", "greedy", "--instance", "inst.json", "--trials", "10", "--out", "r.json"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bad_inputs_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.json"), "{\"a_count\": 1,").unwrap();
    let out = qcmatch(dir.path(), &["solve", "--instance", "bad.json", "--out", "s.json"]);
    assert_eq!(out.status.code(), Some(2));
    let out = qcmatch(dir.path(), &["solve", "--instance", "missing.json", "--out", "s.json"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.json"));

    setup(dir.path());
    let out = qcmatch(
        dir.path(),
        &["run", "--alg", "magic", "--instance", "inst.json", "--solution", "sol.json", "--trials", "10", "--seed", "1", "--out", "r.json"],
    );
    assert_eq!(out.status.code(), Some(2));
    let out = qcmatch(dir.path(), &["run", "--alg", "alg1", "--instance", "inst.json", "--trials", "10", "--seed", "1", "--out", "r.json"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("needs --solution"));
}

#[test]
fn verify_exit_status_tracks_the_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = qcmatch(dir.path(), &["verify", "--suite", "constants", "--out", "v.json"]);
    assert_eq!(out.status.code(), Some(0));
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("v.json")).unwrap()).unwrap();
    assert_eq!(report["pass"], true);
    let out = qcmatch(dir.path(), &["verify", "--suite", "nope"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn verify_all_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = qcmatch(dir.path(), &["verify", "--suite", "all", "--out", "v.json"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("v.json")).unwrap()).unwrap();
    assert!(report["checks"].as_array().unwrap().iter().all(|c| c["pass"] == true));
}

#[test]
fn report_ratios_respect_lp_dominance() {
    let dir = tempfile::tempdir().unwrap();
    setup(dir.path());
    let run = qcmatch(
        dir.path(),
        &["run", "--alg", "greedy,alg1", "--instance", "inst.json", "--solution", "sol.json", "--trials", "20000", "--seed", "4", "--out", "run.json"],
    );
    assert!(run.status.success());
    let rep = qcmatch(
        dir.path(),
        &["report", "--solution", "sol.json", "--runs", "run.json", "--instance", "inst.json", "--out", "summary.json"],
    );
    assert!(rep.status.success(), "{}", String::from_utf8_lossy(&rep.stderr));
    let table = String::from_utf8_lossy(&rep.stdout);
    assert!(table.starts_with("algorithm"));
    assert_eq!(table.lines().count(), 3);
    let summary: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("summary.json")).unwrap()).unwrap();
    for row in summary["rows"].as_array().unwrap() {
        let lp = row["ratio_vs_lp"].as_f64().unwrap();
        let opt = row["ratio_vs_opt"].as_f64().unwrap();
        assert!(opt >= lp - 1e-12);
    }
}

#[test]
fn oracle_lemmas_and_probe() {
    let dir = tempfile::tempdir().unwrap();
    setup(dir.path());
    let out = qcmatch(dir.path(), &["oracle", "--instance", "inst.json", "--sigma", "1", "--events", "all"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["lemmas"]["pass"], true);
    assert!(v["report"]["expected_weight"].as_f64().unwrap() > 0.0);

    let out = qcmatch(dir.path(), &["probe", "--instance", "inst.json", "--solution", "sol.json", "--vertex", "0"]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    for m in v["marginals"].as_array().unwrap() {
        assert!((m[1].as_f64().unwrap() - m[2].as_f64().unwrap()).abs() < 1e-7);
    }
    let out = qcmatch(dir.path(), &["probe", "--instance", "inst.json", "--solution", "sol.json", "--vertex", "9"]);
    assert_eq!(out.status.code(), Some(2));
}
