// SPDX-License-Identifier: Apache-2.0

mod common;

use std::path::Path;
use std::process::{Command, Output};

use rome::llm::ReplayMode;

fn rome(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rome")).args(args).output().expect("rome binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap_or(-1)
}

fn text(o: &Output) -> String {
    format!("{}{}", String::from_utf8_lossy(&o.stdout), String::from_utf8_lossy(&o.stderr))
}

fn lenient_flag() -> Option<&'static str> {
    (common::replay_mode(&common::simulator()) == ReplayMode::Lenient).then_some("--lenient")
}

fn s(p: &Path) -> String {
    p.display().to_string()
}

#[test]
fn run_then_verify() {
    let dir = tempfile::tempdir().unwrap();
    let ws = dir.path().join("ws");
    let suite = s(&common::suite_dir());
    let transcript = s(&common::replay("decoder_5to32/hdhp.ndjson"));
    let mut args = vec![
        "run", "--suite", &suite, "--benchmark", "decoder_5to32", "--mode", "hdhp", "--model", "scripted",
        "--prompt-mode", "completion", "--replay", &transcript,
    ];
    let ws_s = s(&ws);
    args.extend(["--workspace", &ws_s]);
    args.extend(lenient_flag());
    let out = rome(&args);
    assert_eq!(code(&out), 0, "{}", text(&out));
    assert!(text(&out).contains("success"));
    assert!(ws.join("prev_submods.v").is_file());

    let out = rome(&["replay-verify", "--workspace", &ws_s]);
    assert_eq!(code(&out), 0, "{}", text(&out));
}

#[test]
fn failing_run_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let suite = s(&common::suite_dir());
    let transcript = s(&common::replay("mux_64to1/nh.ndjson"));
    let ws = s(&dir.path().join("ws"));
    let mut args = vec![
        "run", "--suite", &suite, "--benchmark", "mux_64to1", "--mode", "nh", "--model", "scripted",
        "--prompt-mode", "completion", "--replay", &transcript, "--workspace", &ws,
    ];
    args.extend(lenient_flag());
    let out = rome(&args);
    assert_eq!(code(&out), 1, "{}", text(&out));
    assert!(text(&out).contains("failure"));
}

#[test]
fn usage_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let suite = s(&common::suite_dir());
    let out = rome(&["run", "--suite", &suite, "--benchmark", "no_such_bench", "--mode", "nh"]);
    assert_eq!(code(&out), 2, "{}", text(&out));

    let empty = s(dir.path());
    let golden = s(&common::suite_dir().join("mux_64to1/manifest.toml"));
    let out = rome(&["eval-plan", "--golden", &golden, "--candidates", &empty]);
    assert_eq!(code(&out), 2, "{}", text(&out));

    let out = rome(&["run", "--suite", &suite, "--benchmark", "mux_64to1", "--mode", "sideways"]);
    assert_eq!(code(&out), 2, "{}", text(&out));
}

#[test]
fn eval_plan_lists_differences() {
    let golden = s(&common::suite_dir().join("mux_64to1/manifest.toml"));
    let candidates = s(&common::fixtures().join("plans/mux_64to1"));
    let out = rome(&["eval-plan", "--golden", &golden, "--candidates", &candidates]);
    assert_eq!(code(&out), 0, "{}", text(&out));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("candidate_13.txt: missing [] extraneous [Testbench]"), "{stdout}");
    assert!(stdout.contains("candidate_01.txt: exact"));
    assert_eq!(stdout.lines().last(), Some("accuracy 0.85 (17/20)"));
}

#[test]
fn bench_interrupt_and_resume() {
    let dir = tempfile::tempdir().unwrap();
    let root = s(&dir.path().join("out"));
    let suite = s(&common::suite_dir());
    let replay = s(&common::fixtures().join("replay"));
    let mut args = vec![
        "--workspace-root", &root, "bench", "--suite", &suite, "--benchmarks", "decoder_5to32", "--models", "scripted",
        "--modes", "nh", "--iterations", "10", "--replay-dir", &replay, "--prompt-mode", "completion",
    ];
    args.extend(lenient_flag());
    let mut first = args.clone();
    first.extend(["--max-runs", "4"]);
    let out = rome(&first);
    assert_eq!(code(&out), 1, "{}", text(&out));
    let records = rome::bench::read_records(&dir.path().join("out/records.ndjson")).unwrap();
    assert_eq!(records.len(), 4);

    let mut again = args.clone();
    again.push("--resume");
    let out = rome(&again);
    assert_eq!(code(&out), 0, "{}", text(&out));
    let report = common::read(&dir.path().join("out/report.csv"));
    let mut lines = report.lines();
    assert!(lines.next().unwrap().contains("pass@1,pass@5"));
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(&row[..7], ["decoder_5to32", "scripted", "nh", "10", "8", "0.8", "1.0"]);
}
