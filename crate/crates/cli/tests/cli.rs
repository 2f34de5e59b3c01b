use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};
use std::time::Duration;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_proxyhand"));
    c.env("RUST_LOG", "warn");
    c
}

fn fixture(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("..").join(rel)
}

fn temp(name: &str) -> PathBuf {
    std::env::temp_dir().join(format!("proxyhand-cli-{}-{name}", std::process::id()))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn passing_script_exits_zero() {
    let f = fixture("core/fixtures/scenarios/maximize_volume.json");
    let o = run(&["script", f.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).contains("pass"));
}

#[test]
fn failing_assertion_is_nonzero_with_a_diff() {
    let scenes = fixture("core/fixtures/scenes");
    let doc = serde_json::json!({
        "name": "wrong_expectation",
        "scene": scenes.join("testbed.json"),
        "commands": [{"t_ms": 0, "text": "maximize the volume"}],
        "assertions": [{"object": "volume_slider", "predicate": "slider_value", "value": 0.25}]
    });
    let path = temp("wrong.json");
    std::fs::write(&path, doc.to_string()).unwrap();
    let o = run(&["script", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let out = stdout(&o);
    assert!(out.contains("FAIL") && out.contains("expected 0.25, got 1"), "{out}");

    let o = run(&["script", "--json", path.to_str().unwrap()]);
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(report["passed"], false);
    let _ = std::fs::remove_file(path);
}

#[test]
fn missing_scene_is_a_config_error() {
    let o = run(&["serve", "--scene", "/definitely/not/here.json"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn port_in_use_is_a_bind_error() {
    let taken = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = taken.local_addr().unwrap().to_string();
    let o = run(&["serve", "--listen", &addr]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn interrupt_shuts_down_cleanly() {
    let mut child = bin()
        .args(["serve", "--listen", "127.0.0.1:0"])
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).unwrap();
    assert!(line.starts_with("listening on"), "{line}");
    let addr = line.trim().trim_start_matches("listening on ");
    assert!(std::net::TcpStream::connect(addr).is_ok());

    let killed = Command::new("kill").args(["-INT", &child.id().to_string()]).status().unwrap();
    assert!(killed.success());
    for _ in 0..100 {
        if let Some(status) = child.try_wait().unwrap() {
            assert_eq!(status.code(), Some(0));
            return;
        }
        std::thread::sleep(Duration::from_millis(50));
    }
    child.kill().unwrap();
    panic!("server ignored SIGINT");
}

#[test]
fn replay_drives_the_engine_headless() {
    let input = r#"{"payload":{"final":true,"text":"put the apple into the basket"},"seq":1,"ts_ms":0,"type":"command_text"}"#;
    let rec = serde_json::json!({"dir": "in", "client": 1, "at_ms": 100, "line": input});
    let path = temp("session.jsonl");
    std::fs::write(&path, format!("{rec}\n")).unwrap();
    let o = run(&["serve", "--replay", path.to_str().unwrap(), "--json"]);
    assert_eq!(o.status.code(), Some(0));
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(report["held"], serde_json::Value::Null);
    let objects = report["scene"].as_array().unwrap();
    let find = |id: &str| objects.iter().find(|o| o["id"] == id).unwrap().clone();
    let (apple, basket) = (find("apple"), find("basket"));
    for axis in 0..3 {
        let p = apple["position"][axis].as_f64().unwrap();
        let c = basket["position"][axis].as_f64().unwrap();
        let h = basket["half_extents"][axis].as_f64().unwrap();
        assert!((p - c).abs() <= h, "apple outside basket on axis {axis}");
    }
    let _ = std::fs::remove_file(path);
}

#[test]
fn bench_reports_tiers() {
    let corpus = fixture("bench/corpus/grammar.txt");
    let o = run(&["bench", "--json", "--rounds", "1", corpus.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(report["commands"], 100);
    assert!(report["grammar"]["p95_us"].as_f64().unwrap() > 0.0);
    assert!(report["end_to_end"]["p50_us"].as_f64().is_some());
}

#[test]
fn empty_corpus_is_a_usage_error() {
    let path = temp("empty.txt");
    std::fs::write(&path, "# nothing here\n").unwrap();
    let o = run(&["bench", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let _ = std::fs::remove_file(path);
}
