use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn repo() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn daas(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_daas"))
        .args(args)
        .env_remove("DAAS_LLM_ENDPOINT")
        .env_remove("DAAS_LLM_MODEL")
        .env_remove("DAAS_LLM_API_KEY")
        .output()
        .expect("binary runs")
}

fn json(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn diamond() -> PathBuf {
    repo().join("crates/core/tests/fixtures/diamond.json")
}

#[test]
fn route_both_on_diamond_agrees() {
    let net = diamond();
    let out = daas(&["route", "--net", p(&net), "--algo", "both", "--cost", "distance", "--from", "0", "--to", "3"]);
    let v = json(&out);
    assert_eq!(v["dijkstra"]["total_distance_km"], v["astar"]["total_distance_km"]);
    assert_eq!(v["delta_distance_km"], 0.0);
    assert!(stderr(&out).contains("Dijkstra"));
}

#[test]
fn route_to_self_is_zero_cost() {
    let net = diamond();
    let v = json(&daas(&["route", "--net", p(&net), "--from", "2", "--to", "2"]));
    assert_eq!(v["node_sequence"], serde_json::json!([2]));
    assert_eq!(v["total_duration_s"], 0.0);
}

#[test]
fn route_unknown_station_exits_1() {
    let net = diamond();
    let out = daas(&["route", "--net", p(&net), "--from", "0", "--to", "42"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("42"), "{}", stderr(&out));
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(daas(&["route", "--bogus"]).status.code(), Some(2));
    assert_eq!(daas(&["frobnicate"]).status.code(), Some(2));
    let net = diamond();
    assert_eq!(daas(&["route", "--net", p(&net), "--from", "0", "--to", "1", "--algo", "bfs"]).status.code(), Some(2));
}

#[test]
fn route_divergence_fixture_paper_heuristic() {
    let dir = repo().join("crates/core/tests/fixtures");
    let (net, wx) = (dir.join("divergence.json"), dir.join("divergence_weather.csv"));
    let v = json(&daas(&[
        "route",
        "--net",
        p(&net),
        "--weather",
        p(&wx),
        "--algo",
        "both",
        "--heuristic",
        "paper",
        "--from",
        "0",
        "--to",
        "3",
    ]));
    assert!(v["delta_duration_s"].as_f64().unwrap() > 0.0);
    assert!(v["delta_distance_km"].as_f64().unwrap() > 0.0);
}

#[test]
fn simulate_hand_traced_scenario() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let cfg = repo().join("scenarios/hand_traced/config.json");
    let report = json(&daas(&["simulate", "--config", p(&cfg), "--output-dir", p(&a), "--seed", "9"]));
    assert_eq!(report["requests_completed"], 1);
    assert_eq!(report["mean_delivery_duration_s"], 1000.0);
    assert_eq!(report["total_distance_km"], 20.0);
    let flights = std::fs::read_to_string(a.join("flights.jsonl")).unwrap();
    assert_eq!(flights.lines().count(), 2);

    json(&daas(&["simulate", "--config", p(&cfg), "--output-dir", p(&b), "--seed", "9"]));
    for f in ["flights.jsonl", "events.jsonl", "report.json"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    let summary = json(&daas(&["summarize", "--log", p(&a.join("flights.jsonl"))]));
    assert_eq!(summary, report);
}

#[test]
fn simulate_with_missing_weather_writes_nothing() {
    let tmp = tempfile::tempdir().unwrap();
    let src = repo().join("scenarios/hand_traced");
    for f in ["network.json", "fleet.json", "requests.jsonl", "config.json"] {
        std::fs::copy(src.join(f), tmp.path().join(f)).unwrap();
    }
    let out = daas(&["simulate", "--config", p(&tmp.path().join("config.json"))]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("weather.csv"), "{}", stderr(&out));
    assert!(!tmp.path().join("out").exists());
    assert!(out.stdout.is_empty());
}

#[test]
fn corpus_parse_eval_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let t = tmp.path();
    let (net, corpus, preds) = (t.join("net.json"), t.join("corpus.jsonl"), t.join("pred.jsonl"));
    assert!(daas(&["gen-net", "--stations", "30", "--seed", "5", "--out", p(&net)]).status.success());
    assert!(daas(&["gen-corpus", "--net", p(&net), "--count", "5000", "--seed", "5", "--out", p(&corpus)])
        .status
        .success());
    let summary =
        json(&daas(&["parse", "--backend", "pattern", "--net", p(&net), "--in", p(&corpus), "--out", p(&preds)]));
    assert_eq!(summary["complete"], 5000);
    let report = json(&daas(&["eval", "--pred", p(&preds), "--gold", p(&corpus)]));
    assert_eq!(report["exact_match"], 1.0);
    for f in ["start_node", "destination_node", "payload_kg"] {
        assert_eq!(report["per_field"][f], 1.0, "{f}");
    }
}

#[test]
fn parse_llm_without_endpoint_names_variable() {
    let tmp = tempfile::tempdir().unwrap();
    let t = tmp.path();
    let (net, corpus, preds) = (t.join("net.json"), t.join("corpus.jsonl"), t.join("pred.jsonl"));
    assert!(daas(&["gen-net", "--stations", "5", "--out", p(&net)]).status.success());
    assert!(daas(&["gen-corpus", "--net", p(&net), "--count", "3", "--out", p(&corpus)]).status.success());
    let out = daas(&["parse", "--backend", "llm", "--net", p(&net), "--in", p(&corpus), "--out", p(&preds)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("DAAS_LLM_ENDPOINT"), "{}", stderr(&out));
    assert!(!preds.exists());
}

#[test]
fn eval_length_mismatch_exits_1() {
    let tmp = tempfile::tempdir().unwrap();
    let t = tmp.path();
    let (net, corpus, preds) = (t.join("net.json"), t.join("corpus.jsonl"), t.join("pred.jsonl"));
    assert!(daas(&["gen-net", "--stations", "5", "--out", p(&net)]).status.success());
    assert!(daas(&["gen-corpus", "--net", p(&net), "--count", "4", "--out", p(&corpus)]).status.success());
    assert!(daas(&["parse", "--net", p(&net), "--in", p(&corpus), "--out", p(&preds)]).status.success());
    let text = std::fs::read_to_string(&preds).unwrap();
    std::fs::write(&preds, text.lines().take(3).map(|l| format!("{l}\n")).collect::<String>()).unwrap();
    let out = daas(&["eval", "--pred", p(&preds), "--gold", p(&corpus)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains('3') && stderr(&out).contains('4'), "{}", stderr(&out));
}

#[test]
fn generators_are_deterministic_and_loadable() {
    let tmp = tempfile::tempdir().unwrap();
    let net = tmp.path().join("net.json");
    let a = daas(&["gen-net", "--stations", "12", "--seed", "3"]);
    assert_eq!(a.stdout, daas(&["gen-net", "--stations", "12", "--seed", "3"]).stdout);
    let v: Value = serde_json::from_slice(&a.stdout).unwrap();
    assert_eq!(v["stations"].as_array().unwrap().len(), 12);
    std::fs::write(&net, &a.stdout).unwrap();

    let w = daas(&["gen-weather", "--net", p(&net), "--slots", "4", "--seed", "3"]);
    assert!(w.status.success());
    let csv = String::from_utf8(w.stdout).unwrap();
    assert!(csv.starts_with("slot,station_id,"));
    assert_eq!(csv.lines().count(), 1 + 4 * 12);

    let f = json(&daas(&["gen-fleet", "--net", p(&net), "--drones", "3", "--seed", "3"]));
    assert_eq!(f.as_array().unwrap().len(), 3);
}

#[test]
fn failed_generation_leaves_no_file() {
    let tmp = tempfile::tempdir().unwrap();
    let out_path = tmp.path().join("net.json");
    let out = daas(&["gen-net", "--stations", "0", "--out", p(&out_path)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!out_path.exists());
}
