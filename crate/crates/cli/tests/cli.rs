use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use uql_core::instances;
use uql_core::{BooleanFunction, CostVector, Instance};

fn uql(args: &[&str], threads: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_uql"));
    cmd.args(args);
    match threads {
        Some(t) => cmd.env("UQL_THREADS", t),
        None => cmd.env_remove("UQL_THREADS"),
    };
    cmd.output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = uql(args, None);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn write_instance(dir: &Path, name: &str, inst: &Instance) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, inst.to_json().unwrap()).unwrap();
    p
}

fn json(s: &str) -> serde_json::Value {
    serde_json::from_str(s).unwrap()
}

fn column(csv: &str, name: &str) -> Vec<String> {
    let mut r = csv::Reader::from_reader(csv.as_bytes());
    let idx = r.headers().unwrap().iter().position(|h| h == name).unwrap();
    r.records().map(|rec| rec.unwrap()[idx].to_string()).collect()
}

fn mean(v: &[String]) -> f64 {
    v.iter().map(|s| s.parse::<f64>().unwrap()).sum::<f64>() / v.len() as f64
}

#[test]
fn analyze_reports_influences() {
    let v = json(&ok(&["analyze", "--function", "tribes:w=2"]));
    let inf = v["influences"].as_array().unwrap();
    assert_eq!(inf.len(), 8);
    assert!(inf.iter().all(|x| x.as_f64().unwrap() == 27.0 / 128.0));
    assert_eq!(v["total_influence"].as_f64().unwrap(), 27.0 / 16.0);

    let v = json(&ok(&["analyze", "--function", "parity:n=5"]));
    assert_eq!(v["total_influence"].as_f64().unwrap(), 5.0);

    let v = json(&ok(&["analyze", "--function", r#"{"family":"symmetric","profile":[1,1,1]}"#]));
    assert!(v["influences"].as_array().unwrap().iter().all(|x| x.as_f64().unwrap() == 0.0));
    assert_eq!(v["bias"].as_f64().unwrap(), 0.0);
}

#[test]
fn simulate_examples() {
    let dir = tempfile::tempdir().unwrap();
    let constant = Instance::new(BooleanFunction::constant(3, true).unwrap(), CostVector::uniform(3, 2.0).unwrap(), "const", 0).unwrap();
    let p = write_instance(dir.path(), "const.json", &constant);
    let csv = ok(&["simulate", "--instance", p.to_str().unwrap(), "--strategy", "warmup-iprr:eps=0.1", "--trials", "50"]);
    assert!(csv.starts_with("trial,input,output,correct,total_cost,reveals,status\n"));
    assert!(column(&csv, "total_cost").iter().all(|c| c == "0.0"));

    let and2 = Instance::new(BooleanFunction::and(2).unwrap(), CostVector::uniform(2, 1.0).unwrap(), "and2", 0).unwrap();
    let p = write_instance(dir.path(), "and2.json", &and2);
    let csv = ok(&["simulate", "--instance", p.to_str().unwrap(), "--strategy", "cheapest-first", "--exact", "--beta", "1"]);
    assert_eq!(mean(&column(&csv, "total_cost")), 1.5);
    assert!(column(&csv, "correct").iter().all(|c| c == "true"));
}

#[test]
fn round_robin_sampling_matches_exhaustive_mean() {
    let dir = tempfile::tempdir().unwrap();
    let p = write_instance(dir.path(), "and8.json", &instances::and_instance(8, 3).unwrap());
    let p = p.to_str().unwrap();
    let strategy = format!("round-robin:eps={}", 2f64.powi(-9));
    let exact = mean(&column(&ok(&["simulate", "--instance", p, "--strategy", &strategy, "--exact", "--beta", "1"]), "total_cost"));
    let sampled = mean(&column(
        &ok(&["simulate", "--instance", p, "--strategy", &strategy, "--trials", "10000", "--seed", "5", "--beta", "1"]),
        "total_cost",
    ));
    assert!((sampled - exact).abs() <= 0.05 * exact, "sampled {sampled} vs exhaustive {exact}");
}

#[test]
fn simulate_is_reproducible_across_worker_counts() {
    let dir = tempfile::tempdir().unwrap();
    let p = write_instance(dir.path(), "tribes.json", &instances::tribes_instance(2, 8).unwrap());
    let args = ["simulate", "--instance", p.to_str().unwrap(), "--strategy", "online-query:eps=0.2", "--trials", "200", "--seed", "9", "--beta", "1"];
    let a = uql(&args, Some("1"));
    let b = uql(&args, Some("8"));
    assert!(a.status.success() && b.status.success());
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn step_limited_runs_are_flagged() {
    let dir = tempfile::tempdir().unwrap();
    let p = write_instance(dir.path(), "and4.json", &instances::and_instance(4, 1).unwrap());
    let csv = ok(&["simulate", "--instance", p.to_str().unwrap(), "--strategy", "round-robin:eps=0.01", "--trials", "20", "--step-limit", "3", "--beta", "1"]);
    assert!(column(&csv, "status").iter().any(|s| s == "step_limit"));
}

#[test]
fn benchmark_examples() {
    let dir = tempfile::tempdir().unwrap();
    let and2 = Instance::new(BooleanFunction::and(2).unwrap(), CostVector::new(vec![1.0, 2.0]).unwrap(), "and2", 0).unwrap();
    let p = write_instance(dir.path(), "and2.json", &and2);
    let v = json(&ok(&["benchmark", "--instance", p.to_str().unwrap(), "--eps", "0.1,0.2"]));
    assert_eq!(v["opt_avg_0"].as_f64().unwrap(), 2.0);
    assert_eq!(v["opt_avg_eps"].as_array().unwrap().len(), 2);

    let par = Instance::new(BooleanFunction::parity(2).unwrap(), CostVector::uniform(2, 1.0).unwrap(), "par2", 0).unwrap();
    let p = write_instance(dir.path(), "par2.json", &par);
    let v = json(&ok(&["benchmark", "--instance", p.to_str().unwrap()]));
    assert_eq!(v["opt_avg_0"].as_f64().unwrap(), 2.0);
    assert_eq!(v["opt_worst_0"].as_f64().unwrap(), 2.0);

    let constant = Instance::new(BooleanFunction::constant(2, false).unwrap(), CostVector::uniform(2, 1.0).unwrap(), "c", 0).unwrap();
    let p = write_instance(dir.path(), "c.json", &constant);
    let v = json(&ok(&["benchmark", "--instance", p.to_str().unwrap()]));
    assert_eq!(v["opt_avg_0"].as_f64().unwrap(), 0.0);
    assert_eq!(v["opt_worst_0"].as_f64().unwrap(), 0.0);
}

#[test]
fn experiment_writes_csv_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("pruning.csv");
    ok(&["experiment", "exp-pruning", "--cases", "30", "--seed", "4", "--out", out.to_str().unwrap()]);
    let csv = std::fs::read_to_string(&out).unwrap();
    assert_eq!(csv.lines().count(), 31);
    let summary = json(&std::fs::read_to_string(dir.path().join("pruning.summary.json")).unwrap());
    assert_eq!(summary["violations"].as_u64().unwrap(), 0);
    assert_eq!(summary["config_sha256"].as_str().unwrap().len(), 64);
    assert_eq!(summary["seeds"].as_array().unwrap().len(), 30);

    let again = uql(&["experiment", "exp-pruning", "--cases", "30", "--seed", "4"], Some("8"));
    assert_eq!(String::from_utf8(again.stdout).unwrap(), csv);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(uql(&["experiment", "exp-unknown"], None).status.code(), Some(2));
    assert_eq!(uql(&["simulate", "--instance", "/nonexistent.json", "--strategy", "cheapest-first"], None).status.code(), Some(2));
    assert_eq!(uql(&["analyze", "--function", "parity:n=3"], Some("zero")).status.code(), Some(2));
    let and2 = Instance::new(BooleanFunction::and(2).unwrap(), CostVector::uniform(2, 1.0).unwrap(), "and2", 0).unwrap();
    let p = write_instance(dir.path(), "and2.json", &and2);
    assert_eq!(uql(&["simulate", "--instance", p.to_str().unwrap(), "--strategy", "nope"], None).status.code(), Some(2));

    // A tree computing OR handed to the pruned follower of AND.
    let tree = dir.path().join("or.json");
    std::fs::write(&tree, r#"{"root":0,"nodes":[{"var":0,"lo":1,"hi":4},{"var":1,"lo":2,"hi":3},{"leaf":0},{"leaf":1},{"leaf":1}]}"#).unwrap();
    let strategy = format!("follow-pruned-tree:eps=0.1,tree={}", tree.display());
    let out = uql(&["simulate", "--instance", p.to_str().unwrap(), "--strategy", &strategy, "--trials", "4"], None);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}
