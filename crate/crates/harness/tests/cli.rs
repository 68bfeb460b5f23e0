mod common;

use std::path::Path;
use std::process::{Command, Output};

fn tiersql(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tiersql"))
        .args(args)
        .env_remove("OPENAI_API_KEY")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn run_then_report() {
    let out = tempfile::tempdir().unwrap();
    let config = common::fixture_dir().join("config.json");
    let mut traces = Vec::new();
    for tier in ["basic", "intermediate", "advanced"] {
        let path = out.path().join(format!("fixed-{tier}.traces.jsonl"));
        let text = stdout(&tiersql(&["run", "--config", s(&config), "--tier", tier, "--traces", s(&path)]));
        assert!(text.contains("20 traces (0 resumed, 20 new)"), "{text}");
        traces.push(path);
    }
    let knn = out.path().join("knn.traces.jsonl");
    let spec = format!("knn:{}:5", s(&common::labels_path()));
    let text = stdout(&tiersql(&["run", "--config", s(&config), "--router", &spec, "--traces", s(&knn)]));
    assert!(text.contains("errors 0"), "{text}");
    traces.push(knn);

    let report_dir = out.path().join("report");
    let mut args = vec!["report", "--config", s(&config), "--out", s(&report_dir), "--traces"];
    args.extend(traces.iter().map(|p| s(p)));
    let text = stdout(&tiersql(&args));
    assert!(text.contains("fixed-advanced"), "{text}");
    assert!(text.contains("knn-k5"), "{text}");
    assert!(report_dir.join("report.csv").is_file());
    assert!(report_dir.join("pareto.svg").is_file());
}

#[test]
fn limit_and_cache_inspect() {
    let out = tempfile::tempdir().unwrap();
    let config = common::fixture_dir().join("config.json");
    let path = out.path().join("t.jsonl");
    let text = stdout(&tiersql(&["run", "--config", s(&config), "--limit", "4", "--traces", s(&path)]));
    assert!(text.contains("4 traces"), "{text}");

    let text = stdout(&tiersql(&["cache", "--config", s(&config), "inspect"]));
    assert!(text.contains("entries, 0 estimated"), "{text}");
}

#[test]
fn errors_exit_nonzero() {
    let o = tiersql(&["run", "--config", "/nonexistent/config.json"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error:"));

    let config = common::fixture_dir().join("config.json");
    let o = tiersql(&["run", "--config", s(&config), "--router", "bogus:x"]);
    assert!(!o.status.success());
}
