use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use appc::adapt::Law;
use appc::scenario::{self, Scenario};
use appc::sim::SimulationTrace;

fn benchmark_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios/benchmark.json")
}

fn appc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_appc"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn short_scenario(dir: &Path, t_end: f64) -> PathBuf {
    let mut sc = scenario::load_scenario(&benchmark_path()).unwrap();
    sc.sim.t_end = t_end;
    sc.sim.dt = 1e-3;
    sc.sim.record_stride = 1;
    let path = dir.join("short.json");
    std::fs::write(&path, sc.to_json().unwrap()).unwrap();
    path
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn oracle_prints_ideal_gains() {
    let out = appc(&["oracle", benchmark_path().to_str().unwrap()]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let theta: Vec<f64> = serde_json::from_value(v["theta_star"].clone()).unwrap();
    for (a, b) in theta.iter().zip([11.25, -5.5, -2.0]) {
        assert!((a - b).abs() < 1e-9);
    }
    assert_eq!(v["structural"]["q"], 29);
    assert!((v["structural"]["c1"].as_f64().unwrap() - 1508.0).abs() < 1e-9);
}

#[test]
fn simulate_then_check_fe() {
    let dir = tempfile::tempdir().unwrap();
    let sc = short_scenario(dir.path(), 2.0);
    let out_dir = dir.path().join("run");
    let out = appc(&[
        "simulate",
        sc.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let report = json(&out_dir.join("report.json"));
    assert_eq!(report["runs"].as_array().unwrap().len(), 1);
    assert!(report["runs"][0]["theorem1"]["monotone"].as_bool().unwrap());

    let trace = SimulationTrace::load_csv(&out_dir.join("trace.csv")).unwrap();
    assert_eq!(trace.len(), 2001);
    assert!(trace.samples.windows(2).all(|w| w[0].t < w[1].t));

    let fe = appc(&[
        "check-fe",
        out_dir.join("trace.csv").to_str().unwrap(),
        "--scenario",
        sc.to_str().unwrap(),
    ]);
    assert!(
        fe.status.success(),
        "{}",
        String::from_utf8_lossy(&fe.stderr)
    );
    let v: serde_json::Value = serde_json::from_slice(&fe.stdout).unwrap();
    assert!(v["fe_satisfied"].as_bool().unwrap());
    assert!(v["a16"]["holds"].as_bool().unwrap());
    // the report written during the run and the one recomputed from the CSV agree
    let in_run = &report["runs"][0]["excitation"];
    assert_eq!(in_run["t_e"], v["t_e"]);
    assert_eq!(in_run["fe_satisfied"], v["fe_satisfied"]);
}

#[test]
fn simulate_overrides_and_both_laws() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("both");
    let out = appc(&[
        "simulate",
        benchmark_path().to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
        "--dt",
        "1e-3",
        "--t-end",
        "0.5",
        "--law",
        "both",
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let mem = SimulationTrace::load_csv(&out_dir.join("trace.csv")).unwrap();
    let base = SimulationTrace::load_csv(&out_dir.join("trace_baseline.csv")).unwrap();
    assert_eq!(mem.len(), base.len());
    assert!((mem.last().unwrap().t - 0.5).abs() < 1e-12);
    let report = json(&out_dir.join("report.json"));
    assert_eq!(report["runs"][1]["law"], "baseline");
}

#[test]
fn compare_laws_writes_both_traces() {
    let dir = tempfile::tempdir().unwrap();
    let sc = short_scenario(dir.path(), 1.0);
    let out_dir = dir.path().join("cmp");
    let out = appc(&[
        "compare-laws",
        sc.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    for f in ["trace_memory.csv", "trace_baseline.csv", "compare.json"] {
        assert!(out_dir.join(f).exists(), "{f} missing");
    }
    let v = json(&out_dir.join("compare.json"));
    assert_eq!(v["memory"]["law"], "memory");
    assert!(
        v["memory"]["final_theta_tilde_norm"].as_f64().unwrap()
            < v["baseline"]["final_theta_tilde_norm"].as_f64().unwrap()
    );
}

#[test]
fn bad_scenario_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, "{\n  \"plant\": 3,\n}").unwrap();
    let out = appc(&["oracle", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line"));

    let typo = benchmark_path();
    let text = std::fs::read_to_string(typo)
        .unwrap()
        .replace("\"theta0\"", "\"theta_0\"");
    std::fs::write(&path, text).unwrap();
    let out = appc(&["oracle", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn divergence_exits_with_two_and_keeps_the_trace() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("div");
    let out = appc(&[
        "simulate",
        benchmark_path().to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
        "--dt",
        "1e-3",
        "--t-end",
        "20",
        "--law",
        "baseline",
    ]);
    assert_eq!(
        out.status.code(),
        Some(2),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let report = json(&out_dir.join("report.json"));
    assert!(report["runs"][0]["divergence"]["t"].as_f64().unwrap() > 0.0);
    assert!(
        SimulationTrace::load_csv(&out_dir.join("trace.csv"))
            .unwrap()
            .len()
            > 10
    );
}

#[test]
fn csv_round_trip_is_exact() {
    let mut sc = scenario::load_scenario(&benchmark_path()).unwrap();
    sc.sim.t_end = 0.3;
    sc.sim.dt = 1e-3;
    let run = scenario::run_law(&sc, Law::Memory).unwrap();
    let mut buf = Vec::new();
    run.trace.write_csv(&mut buf).unwrap();
    let back = SimulationTrace::read_csv(buf.as_slice()).unwrap();
    assert_eq!(back.samples, run.trace.samples);
    let header = String::from_utf8_lossy(&buf);
    let header = header.lines().next().unwrap();
    assert!(header.starts_with("t,x1,x2,xref1,xref2,eref1,eref2,r,v,u,ustar,theta1"));
    assert!(header.ends_with("Upsilon3,OmegaScale2"));
}

#[test]
fn scenario_json_round_trip() {
    let sc = scenario::load_scenario(&benchmark_path()).unwrap();
    let back = Scenario::from_json(&sc.to_json().unwrap()).unwrap();
    assert_eq!(back.to_json().unwrap(), sc.to_json().unwrap());
    assert!(back.validate().is_ok());
    assert!(sc.warnings().unwrap().is_empty());
    let mut coarse = sc.clone();
    coarse.sim.dt = 1e-2;
    assert!(coarse
        .warnings()
        .unwrap()
        .iter()
        .any(|w| w.contains("record spacing")));
}
