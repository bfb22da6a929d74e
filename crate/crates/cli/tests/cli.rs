use std::io::{BufRead, BufReader, Write};
use std::net::TcpStream;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};

use serde_json::{json, Value};

use sad_sim_cli::commands::FilterList;
use sad_sim_cli::{main_with, EXIT_DATA, EXIT_OK, EXIT_USAGE};
use sad_sim_core::eval::parse_goal_matrix_csv;
use sad_sim_core::factory::{generate_type_a, GenParams, Interval, Manifest};
use sad_sim_core::scenario::save_json_file;

struct Run {
    code: i32,
    out: String,
    err: String,
}

fn sad_sim(args: &[&str]) -> Run {
    let argv: Vec<String> = std::iter::once("sad-sim")
        .chain(args.iter().copied())
        .map(String::from)
        .collect();
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let code = main_with(&argv, &mut out, &mut err);
    Run {
        code,
        out: String::from_utf8(out).unwrap(),
        err: String::from_utf8(err).unwrap(),
    }
}

fn ok(args: &[&str]) -> String {
    let r = sad_sim(args);
    assert_eq!(r.code, EXIT_OK, "{args:?}: {}", r.err);
    r.out
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Small mixed dataset: `count` per kind in train and test.
fn dataset(dir: &Path, count: usize) -> PathBuf {
    let n = count.to_string();
    ok(&[
        "generate",
        "--kind",
        "all",
        "--count",
        &n,
        "--test-count",
        &n,
        "--seed",
        "3",
        "--out",
        p(dir),
    ]);
    dir.join("manifest.json")
}

fn read(path: &Path) -> Vec<u8> {
    std::fs::read(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

#[test]
fn generate_writes_scenarios_and_manifest() {
    let d = tempfile::tempdir().unwrap();
    let out = ok(&[
        "generate",
        "--kind",
        "a",
        "--count",
        "5",
        "--seed",
        "1",
        "--out",
        p(d.path()),
    ]);
    let manifest_path = d.path().join("manifest.json");
    assert_eq!(out.trim(), p(&manifest_path));
    let m = Manifest::load(&manifest_path).unwrap();
    assert_eq!(m.train.len(), 5);
    assert!(m.test.is_empty());
    for e in &m.train {
        assert!(d.path().join(&e.path).is_file(), "{}", e.path);
        assert!(e.decision_time.unwrap() >= 6.5);
    }

    let again = tempfile::tempdir().unwrap();
    ok(&[
        "generate",
        "--kind",
        "a",
        "--count",
        "5",
        "--seed",
        "1",
        "--out",
        p(again.path()),
    ]);
    assert_eq!(
        read(&manifest_path),
        read(&again.path().join("manifest.json"))
    );
    for e in &m.train {
        assert_eq!(
            read(&d.path().join(&e.path)),
            read(&again.path().join(&e.path))
        );
    }
}

#[test]
fn generate_zero_gives_empty_manifest() {
    let d = tempfile::tempdir().unwrap();
    ok(&[
        "generate",
        "--kind",
        "b",
        "--count",
        "0",
        "--out",
        p(d.path()),
    ]);
    let m = Manifest::load(d.path().join("manifest.json")).unwrap();
    assert!(m.train.is_empty() && m.test.is_empty());
}

#[test]
fn validate_and_filter() {
    let d = tempfile::tempdir().unwrap();
    let manifest = dataset(d.path(), 1);
    let out = ok(&["validate", p(&manifest)]);
    assert_eq!(out.lines().count(), 6);
    assert!(out.lines().all(|l| l.ends_with(": feasible")), "{out}");

    let early = GenParams {
        ego_speed_range: Interval::point(30.0),
        gap_range: Interval::point(40.0),
        challenger_decel_range: Interval::point(-6.0),
        onset_delay_range: Interval::point(1.0),
        ..GenParams::with_seed(1)
    };
    let early_path = d.path().join("early.json");
    save_json_file(&generate_type_a(&early).unwrap(), &early_path).unwrap();
    let lists = d.path().join("lists");
    let out = ok(&["filter", p(&manifest), p(&early_path), "--out", p(&lists)]);
    assert!(out.lines().last().unwrap().contains("rejected"), "{out}");
    let kept: FilterList = serde_json::from_slice(&read(&lists.join("kept.json"))).unwrap();
    let rejected: FilterList = serde_json::from_slice(&read(&lists.join("rejected.json"))).unwrap();
    assert_eq!(kept.scenarios.len(), 6);
    assert_eq!(rejected.scenarios.len(), 1);
    assert!(rejected.scenarios[0].decision_time.unwrap() < 6.5);
}

#[test]
fn unreadable_inputs_are_data_errors() {
    let d = tempfile::tempdir().unwrap();
    let bad = d.path().join("bad.json");
    std::fs::write(&bad, "{\"id\": 3}").unwrap();
    let r = sad_sim(&["validate", p(&bad)]);
    assert_eq!(r.code, EXIT_DATA);
    assert!(r.out.contains("error"), "{}", r.out);
    assert_eq!(
        sad_sim(&["validate", "/nonexistent/x.json"]).code,
        EXIT_DATA
    );
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(sad_sim(&["generate"]).code, EXIT_USAGE);
    assert_eq!(sad_sim(&["frobnicate"]).code, EXIT_USAGE);
    let d = tempfile::tempdir().unwrap();
    let manifest = dataset(d.path(), 1);
    let r = sad_sim(&[
        "eval",
        "--policy",
        "no-such-policy",
        "--manifest",
        p(&manifest),
        "--out",
        p(d.path()),
    ]);
    assert_eq!(r.code, EXIT_USAGE);
    assert!(r.err.contains("no-such-policy"));
    assert_eq!(sad_sim(&["--help"]).code, EXIT_OK);
}

#[test]
fn config_round_trips() {
    let text = ok(&["config"]);
    let d = tempfile::tempdir().unwrap();
    let path = d.path().join("run.toml");
    std::fs::write(&path, &text).unwrap();
    let manifest = dataset(&d.path().join("data"), 1);
    ok(&[
        "eval",
        "--policy",
        "maintain",
        "--manifest",
        p(&manifest),
        "--config",
        p(&path),
        "--out",
        p(&d.path().join("e")),
    ]);
    std::fs::write(&path, "[train]\nbogus = 1\n").unwrap();
    let r = sad_sim(&[
        "eval",
        "--policy",
        "maintain",
        "--manifest",
        p(&manifest),
        "--config",
        p(&path),
        "--out",
        p(d.path()),
    ]);
    assert_eq!(r.code, EXIT_DATA);
    assert!(r.err.contains("bogus"), "{}", r.err);
}

#[test]
fn eval_maintain_on_critical_sets_scores_zero() {
    let d = tempfile::tempdir().unwrap();
    let manifest = dataset(d.path(), 2);
    let run = |out: &Path| {
        ok(&[
            "eval",
            "--policy",
            "maintain",
            "--policy",
            "random",
            "--manifest",
            p(&manifest),
            "--out",
            p(out),
            "--seed",
            "4",
        ])
    };
    let (e1, e2) = (d.path().join("e1"), d.path().join("e2"));
    let table = run(&e1);
    run(&e2);
    let header: Vec<&str> = table.lines().next().unwrap().split_whitespace().collect();
    assert_eq!(header[2..], ["TypeA", "TypeB", "Cutout"]);
    for name in ["goal_matrix.csv", "termination.csv", "episodes.csv"] {
        assert_eq!(read(&e1.join(name)), read(&e2.join(name)), "{name}");
    }
    let rows =
        parse_goal_matrix_csv(&String::from_utf8(read(&e1.join("goal_matrix.csv"))).unwrap())
            .unwrap();
    assert_eq!(rows.len(), 6);
    for (policy, _, episodes, g) in rows {
        assert_eq!(episodes, 2);
        if policy == "maintain" {
            assert_eq!(g, 0.0);
        }
    }
    assert!(e1.join("plots").read_dir().unwrap().count() >= 30);
}

#[test]
fn train_resume_and_evaluate_checkpoint() {
    let d = tempfile::tempdir().unwrap();
    let manifest = dataset(&d.path().join("data"), 1);
    let train = |out: &Path, budget: &str, resume: Option<&Path>| {
        let mut args = vec![
            "train",
            "--manifest",
            p(&manifest),
            "--budget",
            budget,
            "--seed",
            "2",
            "--out",
            p(out),
        ];
        if let Some(r) = resume {
            args.extend(["--resume", p(r)]);
        }
        ok(&args)
    };
    let (a, b) = (d.path().join("a"), d.path().join("b"));
    let out = train(&a, "1000", None);
    train(&b, "1000", None);
    // the budget is checked at decision ticks of 10 sub-steps
    let substeps = |text: &str| -> u64 {
        text.split_whitespace()
            .skip_while(|w| *w != "sub-steps")
            .nth(1)
            .unwrap()
            .parse()
            .unwrap()
    };
    assert!((1000..1010).contains(&substeps(&out)), "{out}");
    for name in ["checkpoint.json", "training_log.csv", "config.toml"] {
        assert_eq!(read(&a.join(name)), read(&b.join(name)), "{name}");
    }
    let log = String::from_utf8(read(&a.join("training_log.csv"))).unwrap();
    assert_eq!(
        log.lines().next().unwrap(),
        "episode,scenario,reason,return,length,substeps_total"
    );

    let ck = a.join("checkpoint.json");
    let more = train(&a, "2000", Some(&ck));
    assert!((2000..2010).contains(&substeps(&more)), "{more}");
    let resumed = String::from_utf8(read(&a.join("training_log.csv"))).unwrap();
    assert!(resumed.lines().count() > log.lines().count());
    assert!(resumed.starts_with(log.trim_end_matches(|c| c != '\n')));

    let e = d.path().join("eval");
    let table = ok(&[
        "eval",
        "--policy",
        &format!("hrl={}", p(&ck)),
        "--policy",
        "maintain",
        "--manifest",
        p(&manifest),
        "--out",
        p(&e),
    ]);
    assert!(table.lines().any(|l| l.starts_with("hrl")), "{table}");
    let r = sad_sim(&[
        "eval",
        "--policy",
        "maintain",
        "--policy",
        "maintain",
        "--manifest",
        p(&manifest),
        "--out",
        p(&e),
    ]);
    assert_eq!(r.code, EXIT_USAGE);
}

#[test]
fn simulate_then_replay() {
    let d = tempfile::tempdir().unwrap();
    let manifest = dataset(d.path(), 1);
    let m = Manifest::load(&manifest).unwrap();
    let scenario = d.path().join(&m.test[0].path);
    let trace = d.path().join("trace.jsonl");
    let out = ok(&[
        "simulate",
        "--scenario",
        p(&scenario),
        "--no-shield",
        "--trace",
        p(&trace),
    ]);
    assert!(out.starts_with("collision "), "{out}");
    let steps: usize = out.split_whitespace().last().unwrap().parse().unwrap();
    let text = ok(&["replay", p(&trace)]);
    assert_eq!(text.lines().count(), steps);
    assert!(text.lines().last().unwrap().ends_with("end collision"));

    let frames = d.path().join("frames");
    ok(&[
        "replay",
        p(&trace),
        "--format",
        "svg",
        "--out",
        p(&frames),
        "--scenario",
        p(&scenario),
    ]);
    assert_eq!(frames.read_dir().unwrap().count(), steps);
    let first = String::from_utf8(read(&frames.join("frame_00000.svg"))).unwrap();
    assert!(first.starts_with("<svg") && first.contains("id=\"ego\""));

    let empty = d.path().join("empty.jsonl");
    std::fs::write(&empty, "").unwrap();
    assert_eq!(ok(&["replay", p(&empty)]), "");
    assert_eq!(
        sad_sim(&["replay", p(&empty), "--format", "svg"]).code,
        EXIT_USAGE
    );
}

fn request(reader: &mut impl BufRead, writer: &mut impl Write, v: Value) -> Value {
    writeln!(writer, "{v}").unwrap();
    writer.flush().unwrap();
    let mut line = String::new();
    reader.read_line(&mut line).unwrap();
    serde_json::from_str(&line).unwrap()
}

#[test]
fn serve_over_tcp_matches_stdio() {
    let d = tempfile::tempdir().unwrap();
    let manifest = dataset(d.path(), 1);
    let id = Manifest::load(&manifest).unwrap().test[0].id.clone();
    let script = [
        json!({"cmd": "step", "action": [1, 1]}),
        json!({"cmd": "hello"}),
        json!({"cmd": "reset", "scenario": "nope"}),
        json!({"cmd": "reset", "scenario": id, "seed": 1}),
        json!({"cmd": "step", "action": [0, 1]}),
        json!({"cmd": "step", "action": [1, 3]}),
        json!({"cmd": "step", "action": [7, 1]}),
    ];

    let bin = env!("CARGO_BIN_EXE_sad-sim");
    let mut server = Command::new(bin)
        .args(["serve", "--manifest", p(&manifest), "--port", "0"])
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let mut banner = String::new();
    BufReader::new(server.stdout.take().unwrap())
        .read_line(&mut banner)
        .unwrap();
    let addr = banner
        .trim()
        .strip_prefix("listening on ")
        .unwrap()
        .to_string();
    let stream = TcpStream::connect(&addr).unwrap();
    let mut reader = BufReader::new(stream.try_clone().unwrap());
    let mut writer = stream;
    let tcp: Vec<Value> = script
        .iter()
        .map(|v| request(&mut reader, &mut writer, v.clone()))
        .collect();
    server.kill().unwrap();
    server.wait().unwrap();

    let mut stdio = Command::new(bin)
        .args(["serve", "--manifest", p(&manifest), "--stdio"])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    {
        let mut input = stdio.stdin.take().unwrap();
        for v in &script {
            writeln!(input, "{v}").unwrap();
        }
    }
    let out = stdio.wait_with_output().unwrap();
    assert!(out.status.success());
    let piped: Vec<Value> = String::from_utf8(out.stdout)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(tcp, piped);

    assert_eq!(tcp[0]["error"], json!("no_episode"));
    assert_eq!(tcp[1]["obs_dim"], json!(22));
    assert_eq!(tcp[2]["error"], json!("unknown_scenario"));
    assert_eq!(tcp[3]["obs"].as_array().unwrap().len(), 22);
    assert_eq!(tcp[4]["ok"], json!(true));
    assert_eq!(tcp[6]["error"], json!("bad_action"));
}
