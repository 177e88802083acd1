use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_lhv-forge"));
    c.env_remove("LHV_FORGE_SEED");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn ok_json(args: &[&str]) -> Value {
    let o = run(args);
    assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    serde_json::from_slice(&o.stdout).expect("stdout is JSON")
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn build_nonmaximal_writes_area_identity() {
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("m.json");
    let o = run(&["model", "build", "--family", "nonmaximal-nxn", "--r", "0.6", "--out", s(&f)]);
    assert!(o.status.success());
    let v = read_json(&f);
    let (big, s1) = (v["summary"]["S"].as_f64().unwrap(), v["summary"]["S1"].as_f64().unwrap());
    let r2 = 0.36;
    assert!(((big - s1 * (1.0 + r2) / r2) / big).abs() <= 1e-6);
    assert_eq!(v["metadata"]["tool"], "lhv-forge");
    assert_eq!(v["metadata"]["config"]["r"], 0.6);
}

#[test]
fn build_maximal_2x2_and_efficiencies() {
    let v = ok_json(&["model", "build", "--family", "maximal-2x2"]);
    assert!((v["summary"]["S"].as_f64().unwrap() - 2f64.sqrt()).abs() < 1e-9);
    let e = ok_json(&["efficiency", "--s", "1.5707963267948966"]);
    assert!((e["efficiencies"]["eta_2"].as_f64().unwrap() - 0.778).abs() < 5e-4);
    let e = ok_json(&["efficiency", "--s", "1"]);
    assert_eq!(e["efficiencies"]["eta_1"], 1.0);
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(run(&["model", "build", "--family", "nonmaximal-nxn", "--r", "1.5"]).status.code(), Some(2));
    assert_eq!(run(&["model", "build", "--family", "nope"]).status.code(), Some(2));
    assert_eq!(run(&["model", "build"]).status.code(), Some(2));
    assert_eq!(run(&["sweep", "--kinds", "nxn", "--r", "1:0:0.1"]).status.code(), Some(2));
    assert_eq!(run(&["sweep", "--kinds", "nxn", "--r", "0:0.5:0.1"]).status.code(), Some(2));
    assert_eq!(run(&["efficiency", "--s", "0.5"]).status.code(), Some(2));
    assert_eq!(run(&["no-such-command"]).status.code(), Some(2));
    let o = run(&["check-optimal", "--model", "/nonexistent/model.json"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(o.stdout.is_empty());
}

#[test]
fn check_optimal_fixtures() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        (vec!["--family", "maximal-nxn"], true),
        (vec!["--family", "finite", "--r", "0.26", "--a-settings", "0,pi/4", "--b-settings", "pi/16,-pi/16"], true),
        (vec!["--family", "maximal-nxn", "--height-offset", "0.1"], false),
    ];
    for (k, (flags, want)) in cases.iter().enumerate() {
        let f = dir.path().join(format!("m{k}.json"));
        let mut args = vec!["model", "build"];
        args.extend(flags.iter().copied());
        args.extend(["--out", s(&f)]);
        assert!(run(&args).status.success());
        let v = ok_json(&["check-optimal", "--model", s(&f)]);
        assert_eq!(v["optimal"].as_bool().unwrap(), *want, "{flags:?}");
    }
}

#[test]
fn model_eval_reports_scaled_jdp() {
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("m.json");
    assert!(run(&["model", "build", "--family", "maximal-nxn", "--out", s(&f)]).status.success());
    let v = ok_json(&["model", "eval", "--model", s(&f), "--a", "0", "--b", "0"]);
    assert!((v["jdp"]["++"].as_f64().unwrap() - 1.0 / std::f64::consts::PI).abs() < 1e-9);
    assert!(v["jdp"]["+-"].as_f64().unwrap().abs() < 1e-12);
}

#[test]
fn sweep_nxn_is_monotone() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["sweep", "--kinds", "nxn", "--r", "0.1:1.0:0.05", "--out-dir", s(dir.path())]);
    assert!(o.status.success());
    let csv = std::fs::read_to_string(dir.path().join("nxn.csv")).unwrap();
    let eta: Vec<f64> = csv.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert_eq!(eta.len(), 19);
    assert!(eta.windows(2).all(|w| w[0] < w[1]));
    let meta = read_json(&dir.path().join("sweep.meta.json"));
    assert_eq!(meta["metadata"]["command"], "sweep");
}

#[test]
fn sweep_2x2_below_ch() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["sweep", "--kinds", "lhv2x2,ch", "--r", "0.1:1.0:0.3", "--step-2x2", "pi/100", "--out-dir", s(dir.path())]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let col = |name: &str| -> Vec<f64> {
        std::fs::read_to_string(dir.path().join(name))
            .unwrap()
            .lines()
            .skip(1)
            .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
            .collect()
    };
    let (two, ch) = (col("lhv2x2.csv"), col("ch.csv"));
    assert_eq!(two.len(), 4);
    assert!(two.iter().zip(&ch).all(|(a, b)| a <= b));
}

#[test]
fn simulate_and_chisq_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let m = dir.path().join("m.json");
    let c = dir.path().join("c.json");
    let t = dir.path().join("t.csv");
    assert!(run(&["model", "build", "--family", "maximal-2x2", "--padding", "independent", "--out", s(&m)]).status.success());
    let o = run(&["simulate", "--model", s(&m), "--n", "200000", "--seed", "12", "--out", s(&c), "--trials", s(&t)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v = read_json(&c);
    assert_eq!(v["counts"]["n"], 200000);
    assert_eq!(v["metadata"]["seed"], 12);
    let trials = std::fs::read_to_string(&t).unwrap();
    assert!(trials.starts_with("trial,a_index,b_index,outA,outB\n"));
    assert_eq!(trials.lines().count(), 200_001);
    let o = run(&["chisq", "--counts", s(&c)]);
    assert!(o.status.success());
    let out = String::from_utf8(o.stdout).unwrap();
    let first = out.lines().next().unwrap();
    assert!(first.starts_with("ACCEPT (p1="), "{first}");
    let report: Value = serde_json::from_str(out.split_once('\n').unwrap().1).unwrap();
    assert_eq!(report["report"]["m1"], 15);
    assert_eq!(report["report"]["m2"], 7);
    // the same counts tested at a wrong efficiency are rejected
    let o = run(&["chisq", "--counts", s(&c), "--eta", "0.9"]);
    assert!(String::from_utf8(o.stdout).unwrap().starts_with("REJECT"));
    let o = run(&["chisq", "--counts", s(&c), "--sigma", "0"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn simulate_with_zero_trials_gives_empty_table() {
    let dir = tempfile::tempdir().unwrap();
    let m = dir.path().join("m.json");
    assert!(run(&["model", "build", "--family", "delayed-choice", "--out", s(&m)]).status.success());
    let v = ok_json(&["simulate", "--model", s(&m), "--n", "0"]);
    assert_eq!(v["counts"]["n"], 0);
    let v = ok_json(&["simulate", "--model", s(&m), "--n", "20000", "--seed", "1"]);
    let counts = &v["counts"];
    let detected: u64 = counts["singles_a"].as_array().unwrap().iter().flat_map(|r| r.as_array().unwrap()).map(|x| x.as_u64().unwrap()).sum();
    assert_eq!(detected, 20000);
}

#[test]
fn seed_falls_back_to_environment_and_jobs_do_not_matter() {
    let dir = tempfile::tempdir().unwrap();
    let m = dir.path().join("m.json");
    assert!(run(&["model", "build", "--family", "maximal-2x2", "--padding", "independent", "--out", s(&m)]).status.success());
    let a = bin().args(["simulate", "--model", s(&m), "--n", "150000"]).env("LHV_FORGE_SEED", "99").output().unwrap();
    let b = run(&["simulate", "--model", s(&m), "--n", "150000", "--seed", "99", "--jobs", "3"]);
    assert!(a.status.success() && b.status.success());
    assert_eq!(a.stdout, b.stdout);
    let c = run(&["simulate", "--model", s(&m), "--n", "150000", "--seed", "98"]);
    assert_ne!(a.stdout, c.stdout);
}

#[test]
fn config_file_supplies_defaults_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"family": "nonmaximal-nxn", "r": 0.3}"#).unwrap();
    let v = ok_json(&["--config", s(&cfg), "model", "build"]);
    assert_eq!(v["descriptor"]["r"], 0.3);
    let v = ok_json(&["--config", s(&cfg), "model", "build", "--r", "0.6"]);
    assert_eq!(v["descriptor"]["r"], 0.6);
    assert_eq!(v["metadata"]["config"]["family"], "nonmaximal-nxn");
}

#[test]
fn optimize_ch_at_r_one() {
    let v = ok_json(&["optimize", "--kind", "ch", "--r", "1"]);
    assert!((v["result"]["threshold"]["eta_star"].as_f64().unwrap() - 0.828427).abs() < 1e-5);
    assert_eq!(run(&["optimize", "--kind", "nxn", "--r", "1"]).status.code(), Some(2));
}

#[test]
fn quantum_source_without_model() {
    let dir = tempfile::tempdir().unwrap();
    let c = dir.path().join("q.json");
    let o = run(&["simulate", "--source", "quantum", "--r", "0.5", "--eta", "0.8", "--n", "200000", "--seed", "4", "--out", s(&c)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let out = String::from_utf8(run(&["chisq", "--counts", s(&c)]).stdout).unwrap();
    assert!(out.starts_with("ACCEPT"), "{out}");
    let out = String::from_utf8(run(&["chisq", "--counts", s(&c), "--r", "1"]).stdout).unwrap();
    assert!(out.starts_with("REJECT"), "{out}");
    assert_eq!(run(&["simulate", "--r", "0.5", "--n", "10"]).status.code(), Some(2));
}
