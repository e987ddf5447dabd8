use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_objsearch"));
    c.env_remove("OPENAI_API_KEY");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn scenario(kind: &str, site: usize) -> String {
    format!(r#"{{"target_label": "car", "episode_kind": "{kind}", "seed": 4, "target_site": {site}}}"#)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn run_first_time_then_experienced() {
    let dir = TempDir::new().unwrap();
    let ft = write(dir.path(), "ft.json", &scenario("first_time", 0));
    let out1 = dir.path().join("o1");
    let o = run(&["run", "--scenario", s(&ft), "--out", s(&out1)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(out1.join("trace.jsonl").is_file());
    assert!(out1.join("trajectory.geojson").is_file());
    assert!(out1.join("memory/grid.json").is_file());
    assert!(out1.join("memory/taskmap.json").is_file());

    let es = write(dir.path(), "es.json", &scenario("experienced_same", 0));
    let out2 = dir.path().join("o2");
    let o = run(&["run", "--scenario", s(&es), "--out", s(&out2)]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("memory required"), "{}", stderr(&o));

    let memory = out1.join("memory");
    let o = run(&["run", "--scenario", s(&es), "--memory", s(&memory), "--out", s(&out2)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
}

#[test]
fn walled_in_target_exits_two() {
    let dir = TempDir::new().unwrap();
    let sc = r#"{
        "map": {
            "width_m": 20, "height_m": 20, "cell_size_m": 0.5,
            "obstacles": [
                {"type": "rect", "x0": 13, "y0": 13, "x1": 17.5, "y1": 13.5, "label": "wall"},
                {"type": "rect", "x0": 13, "y0": 17, "x1": 17.5, "y1": 17.5, "label": "wall"},
                {"type": "rect", "x0": 13, "y0": 13, "x1": 13.5, "y1": 17.5, "label": "wall"},
                {"type": "rect", "x0": 17, "y0": 13, "x1": 17.5, "y1": 17.5, "label": "wall"}
            ],
            "objects": [{"label": "car", "x": 15.25, "y": 15.25, "radius_m": 0.5}]
        },
        "target_label": "car",
        "robot_start": {"position": {"x": 3.25, "y": 3.25}, "heading": 0.0},
        "episode_kind": "first_time"
    }"#;
    let p = write(dir.path(), "walled.json", sc);
    let o = run(&["run", "--scenario", s(&p), "--out", s(&dir.path().join("o"))]);
    assert_eq!(code(&o), 2, "{}\n{}", stdout(&o), stderr(&o));
    let trace = fs::read_to_string(dir.path().join("o/trace.jsonl")).unwrap();
    assert!(trace.lines().last().unwrap().contains("\"outcome\":\"exhausted\""));
}

#[test]
fn batch_aggregates_by_kind_and_is_reproducible() {
    let dir = TempDir::new().unwrap();
    write(dir.path(), "ft.json", &scenario("first_time", 0));
    write(dir.path(), "es.json", &scenario("experienced_same", 0));
    write(dir.path(), "ec.json", &scenario("experienced_changed", 1));
    let m = write(
        dir.path(),
        "manifest.json",
        r#"{"scenarios": ["ft.json", "es.json", "ec.json"], "seeds": [1, 2]}"#,
    );
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        let o = run(&["batch", "--manifest", s(&m), "--out", s(out), "--jobs", "2"]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    let metrics = fs::read_to_string(a.join("metrics.csv")).unwrap();
    let mut lines = metrics.lines();
    assert_eq!(
        lines.next(),
        Some("kind,seed,path_length_m,steps,proposer_calls,outcome")
    );
    assert_eq!(lines.count(), 6);
    let summary = fs::read_to_string(a.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 1 + 3);
    for f in ["metrics.csv", "summary.csv", "summary.json"] {
        assert_eq!(
            fs::read(a.join(f)).unwrap(),
            fs::read(b.join(f)).unwrap(),
            "{f} differs"
        );
    }
}

#[test]
fn empty_manifest_fails() {
    let dir = TempDir::new().unwrap();
    let m = write(dir.path(), "manifest.json", r#"{"scenarios": []}"#);
    let o = run(&["batch", "--manifest", s(&m), "--out", s(&dir.path().join("o"))]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("no scenarios"), "{}", stderr(&o));
}

#[test]
fn converge_default_stub_writes_thirty_rows() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("c");
    let o = run(&["converge", "--iterations", "30", "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = fs::read_to_string(out.join("similarity.csv")).unwrap();
    assert_eq!(csv.lines().count(), 31);
    assert!(out.join("convergence.json").is_file());
}

#[test]
fn converge_remote_without_key_is_actionable() {
    let dir = TempDir::new().unwrap();
    let o = run(&["converge", "--backend", "remote", "--out", s(&dir.path().join("c"))]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("OPENAI_API_KEY"), "{}", stderr(&o));
}

#[test]
fn converge_replay_is_identical_across_runs() {
    let dir = TempDir::new().unwrap();
    let replies = [
        "Let me think about this.",
        "{D5; D4; D6; D3; D7; D2; D8; D1; D9; D0; D10}",
        "{D5; D6; D4; D3; D7; D2; D8; D1; D9; D10; D0}",
    ];
    let lines: Vec<String> = replies
        .iter()
        .map(|r| {
            let body = serde_json_body(r);
            format!(
                r#"{{"request": {{}}, "response": {}, "status": 200, "timestamp": 0}}"#,
                json_string(&body)
            )
        })
        .collect();
    let fixture = write(dir.path(), "fixture.jsonl", &(lines.join("\n") + "\n"));
    let mut curves = Vec::new();
    for name in ["r1", "r2"] {
        let out = dir.path().join(name);
        let o = run(&[
            "converge",
            "--backend",
            "replay",
            "--fixture",
            s(&fixture),
            "--iterations",
            "3",
            "--out",
            s(&out),
        ]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        curves.push(fs::read(out.join("similarity.csv")).unwrap());
    }
    assert_eq!(curves[0], curves[1]);
    let text = String::from_utf8(curves[0].clone()).unwrap();
    assert!(text.lines().nth(1).unwrap().contains("format_violation"));
}

fn json_string(s: &str) -> String {
    let escaped = s.replace('\\', "\\\\").replace('"', "\\\"");
    format!("\"{escaped}\"")
}

fn serde_json_body(content: &str) -> String {
    format!(
        r#"{{"choices": [{{"message": {{"role": "assistant", "content": {}}}}}]}}"#,
        json_string(content)
    )
}

#[test]
fn validate_reports_ok_and_named_violations() {
    let dir = TempDir::new().unwrap();
    let ok = write(dir.path(), "ok.json", &scenario("first_time", 0));
    let o = run(&["validate", "--scenario", s(&ok)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).contains("ok"));

    let inside = write(
        dir.path(),
        "inside.json",
        r#"{"target_label": "car", "episode_kind": "first_time", "seed": 4,
            "robot_start": {"position": {"x": 0.25, "y": 20.25}, "heading": 0.0}}"#,
    );
    let o = run(&["validate", "--scenario", s(&inside)]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("inside an obstacle"), "{}", stderr(&o));

    let even = write(
        dir.path(),
        "even.json",
        r#"{"target_label": "car", "episode_kind": "first_time", "overrides": {"search": {"segments": 10}}}"#,
    );
    let o = run(&["validate", "--scenario", s(&even)]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("2k + 1"), "{}", stderr(&o));
}

#[test]
fn show_config_prints_published_defaults() {
    let o = run(&["--show-config"]);
    assert_eq!(code(&o), 0);
    let text = stdout(&o);
    for needle in [
        "order = 2.5",
        "security = 10.0",
        "repeat = 3.0",
        "direction = 1.5",
        "segments = 11",
        "beta = 0.5",
    ] {
        assert!(text.contains(needle), "missing {needle}:\n{text}");
    }
    assert!(!text.contains("api_key ="), "keys never live in config");
}

#[test]
fn config_file_is_validated_at_load() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "bad.toml", "[criteria]\nsecurity = -1.0\n");
    let o = run(&["--config", s(&cfg), "--show-config"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("criteria"), "{}", stderr(&o));
}

#[test]
fn shipped_scenarios_validate() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios");
    let mut n = 0;
    for entry in fs::read_dir(&dir).unwrap() {
        let p = entry.unwrap().path();
        if p.file_name().unwrap() == "manifest.json" {
            continue;
        }
        let o = run(&["validate", "--scenario", s(&p)]);
        assert_eq!(code(&o), 0, "{}: {}", p.display(), stderr(&o));
        n += 1;
    }
    assert!(n >= 4);
}
