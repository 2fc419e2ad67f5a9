use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn amod(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_amod"))
        .args(args)
        .current_dir(dir)
        .env_remove("AMOD_MODEL_SCRIPT")
        .env_remove("AMOD_MODEL_ENDPOINT")
        .env_remove("AMOD_MODEL_NAME")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Straight 200 m road with two vehicles and two trips.
fn straight_scenario(dir: &Path) -> PathBuf {
    let o = amod(&["gen-map", "--kind", "straight", "--length", "200", "--out", "road.toml"], dir);
    assert!(o.status.success(), "{}", stderr(&o));
    let scenario = r#"
schema_version = 1
map = "road.toml"
seed = 4

[[vehicle]]
id = 0
x = 10.0
y = 0.0
heading = 0.0
speed = 10.0

[[vehicle]]
id = 1
x = 30.0
y = 0.0
heading = 0.0

[[request]]
id = 0
spawn_time = 0.0
pickup = [60.0, 0.0]
destination = [120.0, 0.0]

[[request]]
id = 1
spawn_time = 10.0
pickup = [140.0, 0.0]
destination = [190.0, 0.0]
"#;
    let path = dir.join("scenario.toml");
    std::fs::write(&path, scenario).unwrap();
    path
}

#[test]
fn run_prints_summary_and_writes_run_directory() {
    let tmp = tempfile::tempdir().unwrap();
    straight_scenario(tmp.path());
    let o = amod(&["run", "--scenario", "scenario.toml", "--dispatcher", "fcfs", "--seed", "42", "--out", "out"], tmp.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("T_atr") && text.contains("fcfs"), "{text}");
    assert!(text.contains("100.0%"), "{text}");
    let out = tmp.path().join("out");
    for f in ["metrics.json", "config.toml", "events.jsonl", "distance_penalty.csv", "trajectories/vehicle_1.csv"] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    let echoed = std::fs::read_to_string(out.join("config.toml")).unwrap();
    assert!(echoed.contains("seed = 42") && echoed.contains("dispatcher = \"fcfs\""), "{echoed}");
}

#[test]
fn flags_override_config_file() {
    let tmp = tempfile::tempdir().unwrap();
    straight_scenario(tmp.path());
    std::fs::write(tmp.path().join("cfg.toml"), "schema_version = 1\ndispatcher = \"idle_first\"\nt_sim = 60.0\n").unwrap();
    let o = amod(&["run", "--scenario", "scenario.toml", "--config", "cfg.toml", "--out", "a"], tmp.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let echoed = std::fs::read_to_string(tmp.path().join("a/config.toml")).unwrap();
    assert!(echoed.contains("dispatcher = \"idle_first\"") && echoed.contains("t_sim = 60.0"));
    let o = amod(
        &["run", "--scenario", "scenario.toml", "--config", "cfg.toml", "--dispatcher", "mixed_first", "--out", "b"],
        tmp.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let echoed = std::fs::read_to_string(tmp.path().join("b/config.toml")).unwrap();
    assert!(echoed.contains("dispatcher = \"mixed_first\"") && echoed.contains("t_sim = 60.0"));
}

#[test]
fn unknown_dispatcher_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    straight_scenario(tmp.path());
    let o = amod(&["run", "--scenario", "scenario.toml", "--dispatcher", "nearest"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("unknown dispatcher"), "{err}");
    for name in ["distance_first", "idle_first", "fcfs", "mixed_first", "model"] {
        assert!(err.contains(name), "{err}");
    }
}

#[test]
fn bad_inputs_are_usage_errors() {
    let tmp = tempfile::tempdir().unwrap();
    straight_scenario(tmp.path());
    let o = amod(&["run", "--scenario", "nowhere.toml"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    std::fs::write(tmp.path().join("bad.toml"), "schema_version = 1\nhorizon_steps = 4\n").unwrap();
    let o = amod(&["run", "--scenario", "scenario.toml", "--config", "bad.toml"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("horizon_steps"), "{}", stderr(&o));
    let o = amod(&["run", "--scenario", "scenario.toml", "--dispatcher", "model"], tmp.path());
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("AMOD_MODEL_ENDPOINT"), "{}", stderr(&o));
}

#[test]
fn compare_runs_each_dispatcher_on_one_scenario() {
    let tmp = tempfile::tempdir().unwrap();
    straight_scenario(tmp.path());
    let o = amod(
        &["run", "--scenario", "scenario.toml", "--compare", "distance_first,idle_first,fcfs,mixed_first", "--out", "cmp"],
        tmp.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 4, "{text}");
    for (row, name) in rows.iter().zip(["distance_first", "idle_first", "fcfs", "mixed_first"]) {
        assert!(row.starts_with(name), "{row}");
        let metrics: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(tmp.path().join("cmp").join(name).join("metrics.json")).unwrap())
                .unwrap();
        let t = &metrics["response_time"];
        let cell = format!("{:.2} ± {:.2}", t["mean"].as_f64().unwrap(), t["std"].as_f64().unwrap());
        assert!(row.contains(&cell), "{row} vs {cell}");
        let rr = metrics["picked"].as_f64().unwrap() / metrics["total_requests"].as_f64().unwrap() * 100.0;
        assert_eq!(metrics["response_rate"].as_f64().unwrap(), rr);
    }
    let table = std::fs::read_to_string(tmp.path().join("cmp/comparison.txt")).unwrap();
    assert_eq!(table.lines().count(), 5);
}

#[test]
fn model_dispatcher_uses_scripted_replies() {
    let tmp = tempfile::tempdir().unwrap();
    straight_scenario(tmp.path());
    let script = r#"{"responses": [{"text": "<pairs>[[0, 0]]</pairs>"}, {"error": "timeout"}]}"#;
    std::fs::write(tmp.path().join("script.json"), script).unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_amod"))
        .args(["run", "--scenario", "scenario.toml", "--dispatcher", "model", "--emit-bev", "--out", "m"])
        .current_dir(tmp.path())
        .env("AMOD_MODEL_SCRIPT", "script.json")
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    let events = std::fs::read_to_string(tmp.path().join("m/events.jsonl")).unwrap();
    assert!(events.contains("\"kind\":\"dispatch_fallback\""), "{events}");
    assert!(tmp.path().join("m/bev").read_dir().unwrap().count() >= 2);
}

#[test]
fn gen_scenario_is_deterministic_and_sized() {
    let tmp = tempfile::tempdir().unwrap();
    let o = amod(&["gen-map", "--kind", "grid", "--size", "3", "--length", "80", "--out", "grid.toml"], tmp.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let gen = |out: &str, seed: &str| {
        let o = amod(
            &["gen-scenario", "--map", "grid.toml", "--vehicles", "20", "--requests", "40", "--seed", seed, "--out", out],
            tmp.path(),
        );
        assert!(o.status.success(), "{}", stderr(&o));
        std::fs::read_to_string(tmp.path().join(out)).unwrap()
    };
    let a = gen("a.toml", "1");
    assert_eq!(a, gen("b.toml", "1"));
    assert_ne!(a, gen("c.toml", "2"));
    assert_eq!(a.matches("[[vehicle]]").count(), 20);
    assert_eq!(a.matches("[[request]]").count(), 40);
    assert!(a.contains("map = \"grid.toml\""), "{a}");

    let o = amod(
        &["gen-scenario", "--map", "grid.toml", "--vehicles", "5000", "--requests", "1", "--seed", "1", "--out", "x.toml"],
        tmp.path(),
    );
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("at most"), "{}", stderr(&o));
}
