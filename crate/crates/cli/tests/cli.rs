//! End-to-end runs of the `anh` binary on the bundled scenarios.

use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

fn scenario(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(format!("{name}.json"))
        .to_string_lossy()
        .into_owned()
}

fn anh(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_anh"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn json(out: &Output) -> Value {
    assert!(
        out.status.success(),
        "exit {:?}: {}",
        out.status,
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("stdout is json")
}

#[test]
fn run_with_oracle_reports_no_violations() {
    let report = json(&anh(&[
        "run",
        "--scenario",
        &scenario("double_spend"),
        "--oracle",
    ]));
    assert_eq!(report["invariant_violations"], Value::Array(vec![]));
    assert!(report["oracle"].is_object());
}

#[test]
fn run_writes_report_and_blocks() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("report.json");
    let blocks = dir.path().join("blocks");
    let out = anh(&[
        "run",
        "--scenario",
        &scenario("fig1b"),
        "--report",
        report.to_str().unwrap(),
        "--ledger-dir",
        blocks.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let text = std::fs::read_to_string(&report).unwrap();
    assert!(serde_json::from_str::<Value>(&text).is_ok());
    assert!(blocks.join("block-00000001.bin").exists());
}

#[test]
fn observe_answers_scenario_style_queries() {
    let out = json(&anh(&[
        "observe",
        "--scenario",
        &scenario("double_spend"),
        "--query",
        r#"{"exact_balance":{"account":"Bob"}}"#,
    ]));
    assert_eq!(out["result"], 1000);
    assert_eq!(out["gas_executed"], 0);
}

#[test]
fn pay_on_a_direct_transfer_costs_no_execution() {
    let out = json(&anh(&[
        "pay",
        "--scenario",
        &scenario("fig1a"),
        "--payment",
        "pay",
    ]));
    assert_eq!(out["decision"], "Accept");
    assert_eq!(out["gas_executed"], 0);
}

#[test]
fn audit_reports_a_slash() {
    let out = json(&anh(&[
        "audit-oath",
        "--scenario",
        &scenario("oath"),
        "--oath",
        "false",
    ]));
    assert_eq!(out["verdict"]["Slashed"], 1000);
}

#[test]
fn dump_index_lists_sent_transactions() {
    let out = json(&anh(&[
        "dump-index",
        "--scenario",
        &scenario("double_spend"),
        "--account",
        "Alice",
    ]));
    assert_eq!(out["sent"].as_array().unwrap().len(), 2);
}

#[test]
fn attack_prints_metrics() {
    let out = json(&anh(&["attack", "--kind", "tx-dos", "--count", "50"]));
    assert_eq!(out["metrics"]["admission_rejects"], 50);
    assert_eq!(out["metrics"]["vm_steps_during_consensus"], 0);
}

#[test]
fn bad_input_fails_with_a_message() {
    let out = anh(&[
        "observe",
        "--scenario",
        "/nonexistent.json",
        "--query",
        "{}",
    ]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
    let out = anh(&[
        "pay",
        "--scenario",
        &scenario("fig1a"),
        "--payment",
        "missing",
    ]);
    assert!(!out.status.success());
}
