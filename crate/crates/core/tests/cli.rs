mod common;

use irm::cli::{main_with, metrics_header, EXIT_INVALID, EXIT_NO_ESCAPE, EXIT_OK, VERDICT_NO_DEADLOCK, VERDICT_RESOLVED};
use serde_json::Value;

fn irm(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("irm").chain(args.iter().copied());
    let code = main_with(argv, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn fixture(name: &str) -> String {
    common::scenario_path(name).display().to_string()
}

#[test]
fn run_writes_metrics_trace_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let m = dir.path().join("out/metrics.csv");
    let t = dir.path().join("trace.jsonl");
    let (code, out, _) = irm(&[
        "run", "--scenario", &fixture("corridor.json"), "--control", "on",
        "--metrics-out", m.to_str().unwrap(), "--trace-out", t.to_str().unwrap(),
    ]);
    assert_eq!(code, EXIT_OK);
    let summary: Value = serde_json::from_str(&out).unwrap();
    assert_eq!(summary["summary"]["tasks_delivered"], 2);
    assert_eq!(summary["overrides"][0], "control=true");
    let csv = std::fs::read_to_string(&m).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), metrics_header());
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len() as u64, summary["summary"]["ticks_run"].as_u64().unwrap());
    assert!(rows.iter().all(|r| r.split(',').count() == 6));
    let trace = std::fs::read_to_string(&t).unwrap();
    let events: Vec<Value> = trace.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    let kinds: std::collections::BTreeSet<&str> = events.iter().map(|e| e["event"].as_str().unwrap()).collect();
    for k in ["produced", "emergence", "constraint", "inhibited", "spawned", "dissolved"] {
        assert!(kinds.contains(k), "missing {k} in trace");
    }
    let ticks: Vec<u64> = events.iter().map(|e| e["tick"].as_u64().unwrap()).collect();
    assert!(ticks.windows(2).all(|w| w[0] <= w[1]));
}

#[test]
fn flags_override_file_values() {
    let (code, out, _) = irm(&[
        "run", "--scenario", &fixture("corridor.json"), "--override", "run.ticks=5", "--ticks", "7", "--control", "off",
    ]);
    assert_eq!(code, EXIT_OK);
    let summary: Value = serde_json::from_str(&out).unwrap();
    assert_eq!(summary["summary"]["ticks_run"], 7);
    assert_eq!(summary["control"], false);
}

#[test]
fn no_escape_exits_with_two() {
    let (code, _, err) = irm(&["run", "--scenario", &fixture("trap.json")]);
    assert_eq!(code, EXIT_NO_ESCAPE);
    assert!(err.contains("no escape path"));
}

#[test]
fn compare_verdicts() {
    let (code, out, _) = irm(&["compare", "--scenario", &fixture("corridor.json")]);
    assert_eq!(code, EXIT_OK);
    assert!(out.contains(&format!("verdict: {VERDICT_RESOLVED}")), "{out}");
    let (_, out, _) = irm(&["compare", "--scenario", &fixture("single_task.json")]);
    assert!(out.contains(VERDICT_NO_DEADLOCK), "{out}");
    let (code, out, _) = irm(&["compare", "--scenario", &fixture("trap.json")]);
    assert_eq!(code, EXIT_NO_ESCAPE);
    assert!(out.contains("NoEscapePath"), "{out}");
}

#[test]
fn compare_writes_both_modes() {
    let dir = tempfile::tempdir().unwrap();
    let m = dir.path().join("cmp.csv");
    irm(&["compare", "--scenario", &fixture("single_task.json"), "--metrics-out", m.to_str().unwrap()]);
    let csv = std::fs::read_to_string(m).unwrap();
    assert!(csv.starts_with("control,tick,"));
    assert!(csv.lines().any(|l| l.starts_with("off,")) && csv.lines().any(|l| l.starts_with("on,")));
}

#[test]
fn validate_and_usage_errors() {
    assert_eq!(irm(&["validate", "--scenario", &fixture("corridor.json")]).0, EXIT_OK);
    let (code, _, err) = irm(&["validate", "--scenario", &fixture("negative/missing_reaction.json")]);
    assert_eq!(code, EXIT_INVALID);
    assert!(err.contains("[missing-reaction]"));
    assert_eq!(irm(&["run"]).0, EXIT_INVALID);
    assert_eq!(irm(&["run", "--scenario", "x.json", "--control", "maybe"]).0, EXIT_INVALID);
    assert_eq!(irm(&["run", "--scenario", "/nonexistent.json"]).0, EXIT_INVALID);
    assert_eq!(irm(&["--help"]).0, EXIT_OK);
}

#[test]
fn corridor_defaults_to_control_off() {
    let (_, out, _) = irm(&["run", "--scenario", &fixture("corridor.json")]);
    let summary: Value = serde_json::from_str(&out).unwrap();
    assert_eq!(summary["control"], false);
    assert_eq!(summary["summary"]["deadlocks_detected"], 1);
}

#[test]
fn open_floor_has_no_deadlock() {
    let (code, out, _) = irm(&["compare", "--scenario", &fixture("open_floor.json")]);
    assert_eq!(code, EXIT_OK);
    assert!(out.contains(VERDICT_NO_DEADLOCK), "{out}");
}
