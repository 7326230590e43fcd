use std::process::{Command, Output};

use serde_json::Value;

fn latcap(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_latcap"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("json on stdout")
}

#[test]
fn phi_two_users() {
    let out = latcap(&["phi", "--k", "2"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(json(&out)["table"], serde_json::json!([["1", "1"], ["1/2", "1"]]));
}

#[test]
fn support_value() {
    let out = latcap(&["support", "--k", "3", "--rstar", "1,2,2", "--a", "1,1,1"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["value"], "7");
    assert_eq!(v["partition_value"], "7");
    assert_eq!(v["routes_agree"], true);
}

#[test]
fn member_outside_exits_three() {
    let out = latcap(&["member", "--k", "2", "--rstar", "1,1", "--r", "8/5,0"]);
    assert_eq!(out.status.code(), Some(3));
    let v = json(&out);
    assert_eq!(v["verdict"], "outside");
    assert_eq!(v["separator"], serde_json::json!(["1", "0"]));
}

#[test]
fn member_inside_exits_zero() {
    let out = latcap(&["member", "--k", "3", "--rstar", "1,2,2", "--r", "1,2,2"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(json(&out)["verdict"], "inside");
}

#[test]
fn decimals_are_usage_errors() {
    let out = latcap(&["member", "--k", "2", "--rstar", "1,1", "--r", "1.5,0"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("1.5"));
    assert!(out.stdout.is_empty());
}

#[test]
fn facets_beyond_limit_is_usage_error() {
    let out = latcap(&["facets", "--k", "5", "--symbolic"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("limit"));
}

#[test]
fn plotdata_defaults_to_csv() {
    let out = latcap(&["plotdata", "--rstar", "1,2,2"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("vertex,R_1,R_2,R_3,tight"));
    assert!(text.lines().any(|l| l.starts_with("8,11/3,0,0,")));
    assert!(text.lines().any(|l| l.starts_with("5,1,2,2,")));
}

#[test]
fn simulate_reports_exact_delivery() {
    let out = latcap(&["simulate", "--k", "3", "--cap", "0,0,3", "--alloc", "3,1,3", "--seed", "4", "--trials", "3"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["all_succeeded"], true);
    let runs = v["runs"].as_array().unwrap();
    assert_eq!(runs.len(), 3);
    assert_eq!(runs[0]["delivered_rates"], serde_json::json!(["1", "0", "0"]));
    assert_eq!(runs[2]["seed"], 6);
}

#[test]
fn simulate_over_budget_is_usage_error() {
    let out = latcap(&["simulate", "--k", "2", "--cap", "1,0", "--alloc", "1,1,1;1,2,1"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn simulate_trace_dumps_hex() {
    let out = latcap(&["simulate", "--k", "2", "--cap", "1,2", "--alloc", "2,1,2", "--trace"]);
    let v = json(&out);
    let trace = v["runs"][0]["trace"].as_array().unwrap();
    assert_eq!(trace.len(), 3);
    assert_eq!(trace[2]["subset"], "{1,2}");
    assert_eq!(trace[2]["hex"].as_str().unwrap().len(), 4);
}

#[test]
fn check_lemmas_passes() {
    let out = latcap(&["check-lemmas", "--trials", "300", "--seed", "3", "--max-k", "8"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["passed"], true);
    assert!(v["submodularity"]["kway"]["min_margin"].is_f64());
}

#[test]
fn output_is_byte_deterministic() {
    for args in [
        &["simulate", "--k", "3", "--cap", "2,2,2", "--alloc", "1,2,2;2,3,2;3,1,1", "--seed", "11", "--trace"][..],
        &["check-lemmas", "--trials", "200", "--seed", "5"][..],
        &["facets", "--k", "3", "--symbolic", "--format", "csv"][..],
    ] {
        let a = latcap(args);
        let b = latcap(args);
        assert_eq!(a.stdout, b.stdout);
        assert_eq!(a.status.code(), b.status.code());
    }
}
