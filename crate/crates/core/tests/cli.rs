use std::path::Path;
use std::process::{Command, Output};

use votelaw::io::{parse_curve_csv, parse_curve_json};

fn votelaw(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_votelaw")).args(args).output().unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).unwrap()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn exact_curve_csv() {
    let out = votelaw(&["exact", "--alpha", "0.4", "--p1", "0.85", "--p2", "0.4", "--k-max", "15"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stderr.is_empty());
    let curve = parse_curve_csv(out.stdout.as_slice()).unwrap();
    assert_eq!(curve.ks(), (1..=15).collect::<Vec<_>>());
    assert_eq!(curve.accuracy_at(3), Some(0.5869));
    assert!(curve.points().iter().all(|p| p.stderr.is_none()));
}

#[test]
fn constant_curve_for_a_coin_flip_population() {
    let out = votelaw(&["exact", "--alpha", "1", "--p1", "0.5", "--ks", "1,2,50,99"]);
    assert_eq!(out.status.code(), Some(0));
    let curve = parse_curve_csv(out.stdout.as_slice()).unwrap();
    assert_eq!(curve.accuracies(), vec![0.5; 4]);
}

#[test]
fn optimal_k_report() {
    let out = votelaw(&["optimal-k", "--alpha", "0.4", "--p1", "0.85", "--p2", "0.4"]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    let mut sections = text.split("\n\n");
    assert_eq!(sections.next().unwrap(), "optimal_k,continuous_k\n3,2.679107168");
    let curve = parse_curve_csv(sections.next().unwrap().as_bytes()).unwrap();
    assert_eq!(curve.len(), 100);

    let out = votelaw(&["optimal-k", "--alpha", "0.6", "--p1", "0.65", "--p2", "0.4", "--format", "json"]);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["optimal_k"], 30);
    assert!((v["continuous_k"].as_f64().unwrap() - 30.32).abs() < 0.01);
    assert_eq!(v["curve"].as_array().unwrap().len(), 100);
}

#[test]
fn shape_report() {
    let out = votelaw(&["shape", "--alpha", "0.4", "--p1", "0.85", "--p2", "0.1"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(stdout(&out), "shape,t,threshold\nUShape,1.806722689,0.4465116279\n");
    let out = votelaw(&["shape", "--alpha", "0.4", "--p1", "0.85", "--p2", "0.4", "--format", "json"]);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["shape"], "InverseU");
}

#[test]
fn usage_errors_exit_2_with_one_line() {
    let cases: [&[&str]; 5] = [
        &["optimal-k", "--alpha", "1.4", "--p1", "0.85", "--p2", "0.4"],
        &["simulate", "--strategy", "filter-vote", "--alpha", "0.5", "--p1", "0.7", "--p2", "0.3"],
        &["exact", "--alpha", "0.4", "--p1", "0.85", "--p2", "0.4", "--frobnicate"],
        &["exact", "--alpha", "0.4", "--p1", "0.85"],
        &[],
    ];
    let flags = ["--alpha", "--keep-correct", "--frobnicate", "--p2", "subcommand"];
    for (args, flag) in cases.iter().zip(flags) {
        let out = votelaw(args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        assert!(out.stdout.is_empty(), "{args:?}");
        let err = stderr(&out);
        assert_eq!(err.lines().count(), 1, "{err}");
        assert!(err.contains(flag), "{err}");
    }
}

#[test]
fn runtime_errors_exit_1() {
    let out = votelaw(&["predict", "--model", "/definitely/not/here.json"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(out.stdout.is_empty());
    assert!(stderr(&out).contains("/definitely/not/here.json"));

    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("t.jsonl");
    std::fs::write(&trace, "{\"id\":\"a\",\"true\":\"A\",\"answers\":[\"A\"]}\n").unwrap();
    let out = votelaw(&["resample", "--trace", path_str(&trace), "--strategy", "filter-vote", "--ks", "1"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(out.stdout.is_empty());
    assert!(stderr(&out).contains("keep"));
}

#[test]
fn help_goes_to_stdout() {
    let out = votelaw(&["--help"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).contains("optimal-k"));
    assert!(out.stderr.is_empty());
}

#[test]
fn repeated_runs_are_byte_identical() {
    let args = [
        "simulate", "--alpha", "0.5", "--p1", "0.75", "--p2", "0.4", "--ks", "1,3,8", "--runs", "3000", "--seed", "42",
        "--strategy", "filter-vote", "--keep-correct", "0.8", "--keep-incorrect", "0.3",
    ];
    let first = votelaw(&args);
    assert_eq!(first.status.code(), Some(0));
    assert_eq!(first.stdout, votelaw(&args).stdout);
    let curve = parse_curve_csv(first.stdout.as_slice()).unwrap();
    assert!(curve.points().iter().all(|p| p.stderr.is_some()));

    let mut other_seed = args.to_vec();
    other_seed[12] = "43";
    assert_ne!(first.stdout, votelaw(&other_seed).stdout);
}

#[test]
fn out_flag_writes_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("curve.json");
    let out = votelaw(&[
        "exact", "--alpha", "0.5", "--p1", "0.75", "--p2", "0.4", "--ks", "1,3", "--format", "json", "--out",
        path_str(&path),
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty());
    let curve = parse_curve_json(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(curve.accuracy_at(3), Some(0.597875));
}

#[test]
fn trace_fit_predict_through_files() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("trace.jsonl");
    let model = dir.path().join("model.json");
    let mut lines = String::new();
    for (id, correct) in [("easy", 16), ("hard", 6)] {
        let answers: Vec<&str> = (0..20).map(|j| if j < correct { "yes" } else { "no" }).collect();
        let keep: Vec<u8> = answers.iter().map(|a| u8::from(*a == "yes")).collect();
        lines.push_str(&serde_json::json!({"id": id, "true": "yes", "answers": answers, "keep": keep}).to_string());
        lines.push('\n');
    }
    std::fs::write(&trace, lines).unwrap();

    let out = votelaw(&["resample", "--trace", path_str(&trace), "--ks", "1,5", "--runs", "2000"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let curve = parse_curve_csv(out.stdout.as_slice()).unwrap();
    assert!((curve.accuracy_at(1).unwrap() - 0.55).abs() < 0.05);

    let out = votelaw(&["fit", "--trace", path_str(&trace), "--runs", "2000", "--out", path_str(&model)]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&model).unwrap()).unwrap();
    let items = v["items"].as_array().unwrap();
    assert_eq!(items.len(), 2);
    assert_eq!(items[0]["hard"], false);
    assert_eq!(items[1]["hard"], true);

    let out = votelaw(&["predict", "--model", path_str(&model), "--ks", "1,10,100"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let curve = parse_curve_csv(out.stdout.as_slice()).unwrap();
    assert!(curve.accuracies().iter().all(|a| (0.0..=1.0).contains(a)));

    let out = votelaw(&["resample", "--trace", path_str(&trace), "--strategy", "filter-vote", "--ks", "1,5"]);
    assert_eq!(out.status.code(), Some(0));
    // right whenever a kept (correct) answer is drawn: mean of 1 - (1 - p)^k
    let curve = parse_curve_csv(out.stdout.as_slice()).unwrap();
    for pt in curve.points() {
        let want = 0.5 * (2.0 - 0.2f64.powi(pt.k as i32) - 0.7f64.powi(pt.k as i32));
        assert!((pt.accuracy - want).abs() <= 4.0 * pt.stderr.unwrap(), "{pt:?} vs {want}");
    }
}

#[test]
fn fit_from_bilevel_spec() {
    let out = votelaw(&["fit", "--alpha", "0.5", "--p1", "0.75", "--p2", "0.4"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let ids: Vec<&str> = v["items"].as_array().unwrap().iter().map(|i| i["id"].as_str().unwrap()).collect();
    assert_eq!(ids, ["easy", "hard"]);
}
