use std::io::{BufRead, BufReader};
use std::path::Path;
use std::process::{Child, Command, Output, Stdio};

use serde_json::Value;
use spatial_env_client::EnvClient;

const BIN: &str = env!("CARGO_BIN_EXE_spatial-env");

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(BIN).args(args).current_dir(dir).output().unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = run(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn lines(path: &Path) -> Vec<Value> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

struct Server(Child);

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}

fn serve_tcp(extra: &[&str]) -> (Server, String) {
    let mut child = Command::new(BIN)
        .args(["serve", "--tcp", "127.0.0.1:0"])
        .args(extra)
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let mut first = String::new();
    BufReader::new(child.stdout.take().unwrap()).read_line(&mut first).unwrap();
    let v: Value = serde_json::from_str(&first).unwrap();
    let addr = v["listening"].as_str().unwrap().to_string();
    (Server(child), addr)
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["verify", "--no-such-flag"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));

    let out = run(dir.path(), &["--connect", "127.0.0.1:1", "gen-scene", "--out", "x"]);
    assert_eq!(out.status.code(), Some(2));

    let out = run(dir.path(), &["--connect", "127.0.0.1:1", "selfplay", "--iters", "1"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn runtime_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["replay", "--log", "missing.jsonl"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn gen_scene_then_solve_and_verify() {
    let dir = tempfile::tempdir().unwrap();
    let info: Value = serde_json::from_str(&ok(dir.path(), &["gen-scene", "--seed", "3", "--out", "s3"])).unwrap();
    let scene_id = info["scene_id"].as_str().unwrap();
    let label = info["labels"][0].as_str().unwrap();

    let params = format!(r#"{{"target":"{label}"}}"#);
    let solved: Value = serde_json::from_str(&ok(
        dir.path(),
        &["solve", "--scene", "s3", "--task", "object_counting", "--params", &params],
    ))
    .unwrap();
    assert_eq!(solved["ground_truth"]["kind"], "count");

    let questions = format!(
        "{}\n{}\n",
        serde_json::json!({"task": "object_counting", "context": {"scene_id": scene_id}, "question": {"structured": {"target": label}}}),
        serde_json::json!({"task": "object_counting", "context": {"scene_id": "nowhere"}, "question": {"structured": {"target": label}}}),
    );
    std::fs::write(dir.path().join("q.jsonl"), questions).unwrap();
    ok(dir.path(), &["verify", "--scene", "s3", "--questions", "q.jsonl", "--out", "v.jsonl"]);
    let verdicts = lines(&dir.path().join("v.jsonl"));
    assert_eq!(verdicts.len(), 2);
    assert_eq!(verdicts[0]["valid"], true);
    assert_eq!(verdicts[0]["ground_truth"], solved["ground_truth"]);
    assert_eq!(verdicts[1]["valid"], false);
    assert_eq!(verdicts[1]["failure"]["code"], "CONTEXT_MISSING");
}

#[test]
fn selfplay_questions_reverify_to_logged_verdicts() {
    let dir = tempfile::tempdir().unwrap();
    let summary: Value = serde_json::from_str(&ok(
        dir.path(),
        &[
            "selfplay",
            "--seed",
            "11",
            "--iters",
            "25",
            "--log",
            "log.jsonl",
            "--scenes-out",
            "scenes",
            "--questions-out",
            "q.jsonl",
        ],
    ))
    .unwrap();
    assert_eq!(summary["iterations"], 25);
    ok(dir.path(), &["verify", "--scene", "scenes", "--questions", "q.jsonl", "--out", "v.jsonl"]);
    let questions = lines(&dir.path().join("q.jsonl"));
    let verdicts = lines(&dir.path().join("v.jsonl"));
    assert!(!questions.is_empty());
    assert_eq!(questions.len(), verdicts.len());
    for (q, v) in questions.iter().zip(&verdicts) {
        assert_eq!(q["expected"]["valid"], v["valid"], "{}", q["id"]);
        assert_eq!(q["expected"]["ground_truth"], v["ground_truth"], "{}", q["id"]);
    }

    let report: Value = serde_json::from_str(&ok(dir.path(), &["replay", "--log", "log.jsonl"])).unwrap();
    assert_eq!(report["mismatches"].as_array().unwrap().len(), 0);
}

#[test]
fn stdio_service_answers_a_spawned_client() {
    let mut c = EnvClient::spawn(BIN, &["serve", "--stdio", "--gen-seed", "1"]).unwrap();
    let ping = c.ping().unwrap();
    assert_eq!(ping.engine, "spatial-env");
    let info = c.gen_scene(1, Default::default()).unwrap();
    assert!(!c.feasible(&spatial_env::tasks::ContextRef::scene(&info.scene_id)).unwrap().is_empty());
}

#[test]
fn connect_runs_commands_against_a_tcp_service() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["gen-scene", "--seed", "4", "--out", "s4"]);
    let (_server, addr) = serve_tcp(&[]);

    let remote = ok(dir.path(), &["--connect", &addr, "gen-scene", "--seed", "4"]);
    let local = ok(dir.path(), &["gen-scene", "--seed", "4"]);
    assert_eq!(remote, local);

    let info: Value = serde_json::from_str(&local).unwrap();
    let label = info["labels"][0].as_str().unwrap();
    let params = format!(r#"{{"target":"{label}"}}"#);
    let args = ["solve", "--scene", "s4", "--task", "object_counting", "--params", &params];
    let remote = ok(dir.path(), &[&["--connect", &addr][..], &args[..]].concat());
    assert_eq!(remote, ok(dir.path(), &args));
}

#[test]
fn sched_show_and_reset() {
    let dir = tempfile::tempdir().unwrap();
    ok(
        dir.path(),
        &["selfplay", "--seed", "2", "--iters", "50", "--log", "log.jsonl", "--snapshots", "snaps"],
    );
    let file = "snaps/scheduler_000050.tsv";
    let table = ok(dir.path(), &["sched", "show", "--file", file, "--feasible", "depth_order,room_size"]);
    let rows: Vec<&str> = table.lines().collect();
    assert_eq!(rows.len(), 3);
    let total: f64 = rows[1..]
        .iter()
        .map(|r| r.split('\t').last().unwrap().parse::<f64>().unwrap())
        .sum();
    assert!((total - 1.0).abs() < 1e-3);

    ok(dir.path(), &["sched", "reset", "--file", file]);
    let table = ok(dir.path(), &["sched", "show", "--file", file]);
    for row in table.lines().skip(1) {
        assert_eq!(row.split('\t').nth(1), Some("0"));
    }
}
