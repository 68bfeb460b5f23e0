mod common;

use std::collections::HashMap;
use std::fs;

use tiersql_core::labeler::TrainingRecord;
use tiersql_core::{Difficulty, Phase, RunTrace, Tier};
use tiersql_harness::commands::{
    cmd_cache_gc, cmd_cache_inspect, cmd_eval, cmd_label, cmd_link, cmd_report, cmd_run, ReportRequest,
};
use tiersql_harness::router::load_training_set;
use tiersql_harness::trace::read_manifest;
use tiersql_harness::{load_dataset, read_traces, Budget, Config, DatasetFormat, DatasetSpec, HarnessError, RouterConfig};

fn fixed(tier: Tier) -> RouterConfig {
    RouterConfig::Fixed { tier }
}

fn shipped_labels() -> HashMap<String, Tier> {
    load_training_set(&common::labels_path())
        .unwrap()
        .into_iter()
        .map(|r| (r.query_id, r.label))
        .collect()
}

#[test]
fn fixture_dataset_shape() {
    let out = tempfile::tempdir().unwrap();
    let cfg = common::config(fixed(Tier::Basic), out.path());
    let ds = load_dataset(&cfg.dataset).unwrap();
    assert_eq!(ds.queries.len(), 20);
    assert_eq!(ds.schema("shop").unwrap().tables().len(), 7);
    let count = |d| ds.queries.iter().filter(|q| q.difficulty == Some(d)).count();
    assert_eq!(
        [count(Difficulty::Simple), count(Difficulty::Moderate), count(Difficulty::Challenging)],
        [8, 6, 6]
    );
    assert!(ds.queries.iter().all(|q| q.gold_sql.is_some()));
}

#[test]
fn spider_format_and_missing_database() {
    let dir = tempfile::tempdir().unwrap();
    let questions = dir.path().join("dev.json");
    fs::write(
        &questions,
        r#"[{"db_id": "shop", "question": "How many regions?", "query": "SELECT COUNT(*) FROM region"},
            {"db_id": "shop", "question": "List stores", "query": "SELECT name FROM store"}]"#,
    )
    .unwrap();
    let mut spec = DatasetSpec {
        name: "spider-mini".into(),
        questions_file: questions.clone(),
        databases_dir: common::fixture_dir().join("databases"),
        format: DatasetFormat::Spider,
    };
    let ds = load_dataset(&spec).unwrap();
    let ids: Vec<_> = ds.queries.iter().map(|q| q.id.as_str()).collect();
    assert_eq!(ids, ["0", "1"]);
    assert_eq!(ds.queries[1].gold_sql.as_deref(), Some("SELECT name FROM store"));
    assert!(ds.queries.iter().all(|q| q.hint.is_empty() && q.difficulty.is_none()));

    spec.databases_dir = dir.path().to_path_buf();
    match load_dataset(&spec) {
        Err(HarnessError::UnknownDatabase { db_id, .. }) => assert_eq!(db_id, "shop"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn oracle_router_follows_labels() {
    let out = tempfile::tempdir().unwrap();
    let cfg = common::config(RouterConfig::Oracle { labels: common::labels_path() }, out.path());
    let (_, s) = cmd_run(&cfg, None).unwrap();
    let labels = shipped_labels();
    assert_eq!(s.traces.len(), 20);
    for t in &s.traces {
        assert_eq!(t.chosen_tier, labels[&t.query_id], "{}", t.query_id);
    }
    assert_eq!(s.traces.iter().filter(|t| t.correct == Some(true)).count(), 19);
}

#[test]
fn manifest_and_replay_timing() {
    let out = tempfile::tempdir().unwrap();
    let cfg = common::config(fixed(Tier::Advanced), out.path());
    let (path, s) = cmd_run(&cfg, None).unwrap();
    assert_eq!(path, out.path().join("fixed-advanced.traces.jsonl"));
    assert!(s.traces.iter().all(|t| t.wall_clock_ms == 0));
    let m = read_manifest(&path).unwrap().unwrap();
    assert_eq!(m.router_name, "fixed-advanced");
    assert_eq!(m.queries, 20);
    assert_eq!(m.resumed, 0);
    assert_eq!(m.run_id.len(), 16);
}

#[test]
fn resume_after_interruption_matches_clean_run() {
    let out = tempfile::tempdir().unwrap();
    let cfg = common::config(fixed(Tier::Intermediate), out.path());
    let (path, _) = cmd_run(&cfg, None).unwrap();
    let clean = fs::read_to_string(&path).unwrap();

    // Ten complete lines plus half of the eleventh, as after a crash.
    let lines: Vec<&str> = clean.lines().collect();
    let mut cut: String = lines[..10].iter().map(|l| format!("{l}\n")).collect();
    cut.push_str(&lines[10][..lines[10].len() / 2]);
    fs::write(&path, cut).unwrap();

    let (_, s) = cmd_run(&cfg, None).unwrap();
    assert_eq!(s.resumed, 10);
    assert_eq!(s.executed, 10);
    assert_eq!(fs::read_to_string(&path).unwrap(), clean);

    // A complete file is left alone.
    let (_, s) = cmd_run(&cfg, None).unwrap();
    assert_eq!((s.resumed, s.executed), (20, 0));
}

#[test]
fn stray_trace_ids_are_rejected() {
    let out = tempfile::tempdir().unwrap();
    let mut cfg = common::config(fixed(Tier::Basic), out.path());
    let (path, _) = cmd_run(&cfg, None).unwrap();
    cfg.budget.max_queries = Some(5);
    assert!(matches!(cmd_run(&cfg, Some(&path)), Err(HarnessError::Config(_))));
}

#[test]
fn query_limit_and_token_budget() {
    let out = tempfile::tempdir().unwrap();
    let mut cfg = common::config(fixed(Tier::Basic), out.path());
    cfg.budget.max_queries = Some(3);
    let (_, s) = cmd_run(&cfg, Some(&out.path().join("a.jsonl"))).unwrap();
    assert_eq!(s.traces.len(), 3);

    cfg.budget.max_queries = None;
    cfg.budget.max_weighted_tokens = Some(1);
    cfg.workers = 1;
    let (_, s) = cmd_run(&cfg, Some(&out.path().join("b.jsonl"))).unwrap();
    assert_eq!((s.executed, s.unstarted), (1, 19));
}

fn generation_tokens(t: &RunTrace, mu: f64) -> f64 {
    t.usage
        .iter()
        .filter(|u| u.phase == Phase::Generation)
        .map(|u| u.prompt_tokens as f64 + mu * u.completion_tokens as f64)
        .sum()
}

#[test]
fn report_matches_hand_computation() {
    let out = tempfile::tempdir().unwrap();
    let mut runs = HashMap::new();
    for r in [
        fixed(Tier::Basic),
        fixed(Tier::Intermediate),
        fixed(Tier::Advanced),
        RouterConfig::Oracle { labels: common::labels_path() },
    ] {
        let cfg = common::config(r, out.path());
        let (_, s) = cmd_run(&cfg, None).unwrap();
        runs.insert(cfg.router_name(), s.traces);
    }
    let cfg = common::config(fixed(Tier::Basic), out.path());
    let (report, files) = cmd_report(
        &cfg,
        ReportRequest {
            traces: &[],
            labels: None,
            basic: None,
            advanced: None,
            out_dir: None,
        },
    )
    .unwrap();
    for f in ["report.txt", "report.csv", "report.json", "pareto.svg", "pgr_tep.svg", "disagreement.svg"] {
        assert!(files.contains(&out.path().join("report").join(f)), "{f}");
    }

    let ex = |name: &str| {
        let t = &runs[name];
        t.iter().filter(|t| t.correct == Some(true)).count() as f64 / t.len() as f64
    };
    let tbar = |name: &str| {
        let t = &runs[name];
        t.iter().map(|t| generation_tokens(t, 4.0)).sum::<f64>() / t.len() as f64
    };
    let (ex_b, ex_a) = (ex("fixed-basic"), ex("fixed-advanced"));
    assert_eq!((ex_b, ex("fixed-intermediate"), ex_a, ex("oracle")), (0.40, 0.60, 0.75, 0.95));
    for name in runs.keys() {
        let row = report.row(name).unwrap();
        assert!((row.ex_total.unwrap() - ex(name)).abs() < 1e-12, "{name}");
        assert!((row.avg_tokens - tbar(name)).abs() < 1e-9, "{name}");
        let by: Vec<_> = row.ex_by_difficulty.values().collect();
        assert_eq!(by.iter().map(|c| c.correct).sum::<u64>(), row.correct, "{name}");
        assert_eq!(by.iter().map(|c| c.total).sum::<u64>(), row.queries, "{name}");
    }
    let oracle = report.row("oracle").unwrap();
    let want_pgr = (ex("oracle") - ex_b) / (ex_a - ex_b);
    assert!((oracle.pgr.unwrap() - want_pgr).abs() < 1e-12);
    let want_tep = ((ex("oracle") - ex_b) / ex_b) / ((tbar("oracle") - tbar("fixed-basic")) / tbar("fixed-basic"));
    assert!((oracle.tep.unwrap() - want_tep).abs() < 1e-12);
    // Labels derived from the baseline runs agree with the shipped ones.
    assert_eq!(oracle.utr, Some(1.0));
    assert_eq!(oracle.agreement, Some(1.0));
    assert_eq!(oracle.tier_counts, [8, 6, 6]);
    assert_eq!(report.row("fixed-advanced").unwrap().utr, Some(1.0));

    let simple = &report.row("fixed-basic").unwrap().ex_by_difficulty[&Difficulty::Simple];
    assert_eq!((simple.correct, simple.total), (8, 8));
}

#[test]
fn token_phases_widen_the_cost() {
    let out = tempfile::tempdir().unwrap();
    let mut cfg = common::config(fixed(Tier::Basic), out.path());
    let (_, s) = cmd_run(&cfg, None).unwrap();
    let request = |cfg: &Config| {
        cmd_report(
            cfg,
            ReportRequest {
                traces: &[],
                labels: None,
                basic: None,
                advanced: None,
                out_dir: Some(&out.path().join("r")),
            },
        )
        .unwrap()
        .0
    };
    let generation = request(&cfg).row("fixed-basic").unwrap().avg_tokens;
    cfg.token_phases = vec![Phase::Linking, Phase::Generation];
    let both = request(&cfg).row("fixed-basic").unwrap().avg_tokens;
    let linking: f64 = s
        .traces
        .iter()
        .flat_map(|t| &t.usage)
        .filter(|u| u.phase == Phase::Linking)
        .map(|u| u.prompt_tokens as f64 + 4.0 * u.completion_tokens as f64)
        .sum::<f64>()
        / 20.0;
    assert!(linking > 0.0);
    assert!((both - generation - linking).abs() < 1e-9);
}

#[test]
fn eval_restores_tampered_verdicts() {
    let out = tempfile::tempdir().unwrap();
    let cfg = common::config(fixed(Tier::Advanced), out.path());
    let (path, s) = cmd_run(&cfg, None).unwrap();
    let mut traces = s.traces.clone();
    for t in traces.iter_mut().take(4) {
        t.correct = t.correct.map(|c| !c);
    }
    tiersql_harness::trace::rewrite(&path, &traces).unwrap();
    assert_eq!(cmd_eval(&cfg, &path).unwrap(), 4);
    assert_eq!(read_traces(&path).unwrap(), s.traces);
}

#[test]
fn labeling_reproduces_shipped_training_set() {
    let out = tempfile::tempdir().unwrap();
    let mut cfg = common::config(fixed(Tier::Basic), out.path());
    assert!(cmd_label(&cfg, None).is_err(), "labeling without a budget must be refused");
    cfg.budget = Budget {
        max_queries: Some(50),
        max_weighted_tokens: Some(5_000_000),
    };
    let (path, summary) = cmd_label(&cfg, None).unwrap();
    assert_eq!(tiersql_harness::commands::label_counts(&summary), [8, 6, 6]);
    let got: Vec<TrainingRecord> = load_training_set(&path).unwrap();
    let want: Vec<TrainingRecord> = load_training_set(&common::labels_path()).unwrap();
    assert_eq!(got, want);
    let unsolved: Vec<_> = got.iter().filter(|r| !r.solved).collect();
    assert_eq!(unsolved.len(), 1);
    assert!(unsolved[0].preference_pairs.is_empty());
    assert_eq!(unsolved[0].label, Tier::Advanced);
}

#[test]
fn linking_recovers_gold_columns() {
    let out = tempfile::tempdir().unwrap();
    let cfg = common::config(fixed(Tier::Basic), out.path());
    let (path, recs) = cmd_link(&cfg, None).unwrap();
    assert_eq!(recs.len(), 20);
    assert!(recs.iter().all(|r| r.error.is_none() && r.recall == Some(1.0)), "{recs:?}");
    assert!(recs.iter().all(|r| r.column_reduction.unwrap() > 0.0));
    assert_eq!(fs::read_to_string(path).unwrap().lines().count(), 20);
}

#[test]
fn cache_inspect_and_gc() {
    let out = tempfile::tempdir().unwrap();
    let mut cfg = common::config(fixed(Tier::Basic), out.path());
    let s = cmd_cache_inspect(&cfg).unwrap();
    assert_eq!(s.estimated, 0);
    assert!(s.entries > 100);
    assert_eq!(s.models.iter().map(|(_, n)| n).sum::<usize>(), s.entries);

    let copy = out.path().join("cache");
    fs::create_dir(&copy).unwrap();
    for e in fs::read_dir(cfg.gateway.cache_dir.as_ref().unwrap()).unwrap() {
        let p = e.unwrap().path();
        fs::copy(&p, copy.join(p.file_name().unwrap())).unwrap();
    }
    fs::write(copy.join(".tmp-abc-1-0"), "{").unwrap();
    fs::write(copy.join(format!("{}.json", "0".repeat(64))), "not json").unwrap();
    cfg.gateway.cache_dir = Some(copy);
    let r = cmd_cache_gc(&cfg).unwrap();
    assert_eq!((r.kept, r.removed_temp, r.removed_corrupt), (s.entries, 1, 1));
}

#[test]
fn replay_miss_is_recorded_not_fatal() {
    let out = tempfile::tempdir().unwrap();
    let mut cfg = common::config(fixed(Tier::Basic), out.path());
    let empty = out.path().join("empty-cache");
    fs::create_dir(&empty).unwrap();
    cfg.gateway.cache_dir = Some(empty);
    cfg.budget.max_queries = Some(2);
    let (_, s) = cmd_run(&cfg, None).unwrap();
    assert_eq!(s.traces.len(), 2);
    for t in &s.traces {
        assert!(t.error.is_some());
        assert_ne!(t.correct, Some(true));
    }
}

#[test]
fn secrets_in_config_are_rejected() {
    let text = r#"{"gateway": {"mode": "passthrough", "api_key": "sk-123"}}"#;
    let err = Config::from_json(text, std::path::Path::new(".")).unwrap_err().to_string();
    assert!(err.contains("$.gateway.api_key"), "{err}");
}
