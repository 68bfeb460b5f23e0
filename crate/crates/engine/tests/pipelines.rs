mod common;

use std::path::Path;

use common::*;
use tiersql_core::{DatabaseSchema, LinkedSchema, NLQuery, Phase, Tier, TokenUsage};
use tiersql_engine::prompts::{ASSEMBLE, BASIC, CONQUER, DIVIDE, REFINE, SYNTHESIS};
use tiersql_engine::{parse_link_response, EngineError, GenContext, PipelineConfig, Pipelines, SynthesisScope};
use tiersql_gateway::{Gateway, GatewayMode, Usage};

struct Fx {
    _dir: tempfile::TempDir,
    db: std::path::PathBuf,
    schema: DatabaseSchema,
    linked: LinkedSchema,
    q: NLQuery,
}

fn fx() -> Fx {
    let dir = tempfile::tempdir().unwrap();
    let db = school_db(dir.path());
    let schema = schema_of(&db);
    let linked = parse_link_response(&Script::default().link, &schema);
    Fx {
        _dir: dir,
        db,
        schema,
        linked,
        q: query("q1", "What are the names of charter schools?", "charter = 1 means charter"),
    }
}

impl Fx {
    fn ctx(&self) -> GenContext<'_> {
        GenContext {
            query: &self.q,
            schema: &self.schema,
            linked: &self.linked,
            db_path: Path::new(&self.db),
        }
    }
}

fn pipes(gw: &Gateway) -> Pipelines<'_> {
    Pipelines::new(gw, PipelineConfig::default()).unwrap()
}

fn sum(steps: &[tiersql_engine::StepRecord]) -> TokenUsage {
    steps.iter().fold(TokenUsage::zero(Phase::Generation), |a, s| a.merge(s.usage).unwrap())
}

#[test]
fn basic_uses_recorded_sql_and_stub_usage() {
    let f = fx();
    let script = Script {
        fixed_usage: Some(Usage { prompt_tokens: 321, completion_tokens: 12, estimated: false }),
        ..Script::default()
    };
    let gw = gateway(&script);
    let r = pipes(&gw).generate_basic(&f.ctx()).unwrap();
    assert_eq!(r.sql, "SELECT name FROM school WHERE charter = 1");
    assert_eq!(r.usage, TokenUsage::new(Phase::Generation, 321, 12));
    assert_eq!(r.steps.len(), 1);
    let prompt = &script.calls(BASIC)[0];
    assert!(prompt.contains("### Hint:\n\ncharter = 1 means charter\n\n### User Question:\n\nWhat are the names"));
    // only linked columns are shown
    assert!(prompt.contains("Table: school") && !prompt.contains("Table: teacher"));
}

#[test]
fn basic_empty_completion_is_an_error() {
    let f = fx();
    let script = Script { basic: "   \n".into(), ..Script::default() };
    let gw = gateway(&script);
    match pipes(&gw).generate_basic(&f.ctx()) {
        Err(EngineError::EmptySql { step }) => assert_eq!(step, "basic"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn unfenced_answer_is_flagged() {
    let f = fx();
    let script = Script { basic: "SELECT 2".into(), ..Script::default() };
    let gw = gateway(&script);
    let r = pipes(&gw).generate_basic(&f.ctx()).unwrap();
    assert_eq!(r.sql, "SELECT 2");
    assert!(r.steps[0].unfenced);
    assert_eq!(r.flags, ["unfenced:basic"]);
}

#[test]
fn intermediate_runs_divide_conquer_assemble() {
    let f = fx();
    let script = Script::default();
    let gw = gateway(&script);
    let r = pipes(&gw).generate_intermediate(&f.ctx()).unwrap();
    let names: Vec<_> = r.steps.iter().map(|s| s.step.as_str()).collect();
    assert_eq!(names, ["divide", "conquer[1]", "conquer[2]", "assemble"]);
    assert_eq!(r.sql, "SELECT name FROM school WHERE charter = 1");
    assert_eq!(r.usage, sum(&r.steps));
    assert!(r.flags.is_empty());

    let conquer = script.calls(CONQUER);
    assert!(conquer[0].contains("### Question:\n\nWhich schools are charter schools?"));
    assert!(conquer[1].contains("### Question:\n\nWhat are their names?"));
    assert!(conquer[0].contains("### Examples:\n\n\n\n### Question:"));
    let assemble = &script.calls(ASSEMBLE)[0];
    assert!(assemble.contains("Sub-question 1: Which schools are charter schools?"));
    assert!(assemble.contains("SELECT name FROM school WHERE charter = 1"));
    assert!(assemble.contains("### Main question:\n\nWhat are the names of charter schools?"));
    assert!(script.calls(DIVIDE)[0].contains("Sub-question 1: <<What is the average salary of each department?>>"));
}

#[test]
fn divide_degenerate_and_capped() {
    let f = fx();
    let script = Script { divide: "I cannot split this.".into(), ..Script::default() };
    let gw = gateway(&script);
    let r = pipes(&gw).generate_intermediate(&f.ctx()).unwrap();
    assert!(r.flags.contains(&"divide_degenerate".to_string()));
    let conquer = script.calls(CONQUER);
    assert_eq!(conquer.len(), 1);
    assert!(conquer[0].contains("### Question:\n\nWhat are the names of charter schools?"));
    // a single pair still goes through assemble
    assert_eq!(script.calls(ASSEMBLE).len(), 1);

    let ten: String = (1..=10).map(|i| format!("Sub-question {i}: <<part {i}>>\n")).collect();
    let script = Script { divide: ten, ..Script::default() };
    let gw = gateway(&script);
    pipes(&gw).generate_intermediate(&f.ctx()).unwrap();
    assert_eq!(script.calls(CONQUER).len(), 8);
}

#[test]
fn advanced_injects_synthesized_examples() {
    let f = fx();
    let script = Script::default();
    let gw = gateway(&script);
    let r = pipes(&gw).generate_advanced(&f.ctx()).unwrap();
    assert_eq!(r.tier, Tier::Advanced);
    let names: Vec<_> = r.steps.iter().map(|s| s.step.as_str()).collect();
    assert_eq!(names, ["divide", "synthesize", "conquer[1]", "conquer[2]", "assemble"]);
    assert!(r.flags.iter().any(|f| f.starts_with("synthesis_short")), "{:?}", r.flags);
    let synth = &script.calls(SYNTHESIS)[0];
    assert!(synth.contains("create 3 examples") && synth.contains("Generate a total of 3 examples."));
    for p in script.calls(CONQUER) {
        assert!(p.contains("\"Question\": \"How many schools?\"\n\"SQL\": \"SELECT COUNT(*) FROM school\""));
        assert!(p.contains("\"Question\": \"List district names\"\n\"SQL\": \"SELECT name FROM district\""));
        let a = p.find("How many schools?").unwrap();
        let b = p.find("List district names").unwrap();
        assert!(a < b);
    }
}

#[test]
fn advanced_per_subquestion_scope() {
    let f = fx();
    let script = Script::default();
    let gw = gateway(&script);
    let cfg = PipelineConfig { synthesis_scope: SynthesisScope::PerSubquestion, ..PipelineConfig::default() };
    let r = Pipelines::new(&gw, cfg).unwrap().generate_advanced(&f.ctx()).unwrap();
    let names: Vec<_> = r.steps.iter().map(|s| s.step.as_str()).collect();
    assert_eq!(names, ["divide", "synthesize[1]", "conquer[1]", "synthesize[2]", "conquer[2]", "assemble"]);
}

#[test]
fn empty_synthesis_matches_intermediate_prompts() {
    let f = fx();
    let script_m = Script::default();
    let gw = gateway(&script_m);
    pipes(&gw).generate_intermediate(&f.ctx()).unwrap();

    let script_a = Script { synthesis: "no examples today".into(), ..Script::default() };
    let gw = gateway(&script_a);
    let r = pipes(&gw).generate_advanced(&f.ctx()).unwrap();
    assert!(r.flags.contains(&"synthesis_empty:synthesize".to_string()));
    assert_eq!(script_a.calls(CONQUER), script_m.calls(CONQUER));
    assert_eq!(script_a.calls(ASSEMBLE), script_m.calls(ASSEMBLE));
}

#[test]
fn k_zero_rejected() {
    let script = Script::default();
    let gw = gateway(&script);
    assert!(Pipelines::new(&gw, PipelineConfig { k: 0, ..PipelineConfig::default() }).is_err());
    assert!(Pipelines::new(&gw, PipelineConfig { refine_rounds: 4, ..PipelineConfig::default() }).is_err());
}

#[test]
fn synthesis_parse_through_gateway() {
    let f = fx();
    let three: String = (1..=4)
        .map(|i| format!("\"Question\": \"q{i}\"\n\"SQL\": \"SELECT {i}\"\n\n"))
        .collect();
    let script = Script { synthesis: three, ..Script::default() };
    let gw = gateway(&script);
    let (ex, r) = pipes(&gw).synthesize_examples(&f.ctx()).unwrap();
    assert_eq!(ex.iter().map(|e| e.question.as_str()).collect::<Vec<_>>(), ["q1", "q2", "q3"]);
    assert!(r.flags.is_empty());

    let script = Script { synthesis: "garbage".into(), ..Script::default() };
    let gw = gateway(&script);
    let (ex, _) = pipes(&gw).synthesize_examples(&f.ctx()).unwrap();
    assert!(ex.is_empty());
}

#[test]
fn refine_short_circuits_on_good_sql() {
    let f = fx();
    let script = Script::default();
    let gw = gateway(&script);
    let r = pipes(&gw).refine(&f.ctx(), "SELECT name FROM school".into()).unwrap();
    assert_eq!(r.sql, "SELECT name FROM school");
    assert!(r.steps.is_empty());
    assert_eq!(r.usage, TokenUsage::zero(Phase::Generation));
}

#[test]
fn refine_fixes_broken_sql() {
    let f = fx();
    let script = Script::default();
    let gw = gateway(&script);
    let r = pipes(&gw).refine(&f.ctx(), "SELEC name FROM school".into()).unwrap();
    assert_eq!(r.sql, "SELECT name FROM school");
    let p = &script.calls(REFINE)[0];
    assert!(p.contains("```sql\nSELEC name FROM school\n```"));
    assert!(p.contains("syntax error"));
}

#[test]
fn refine_empty_result_costs_one_call() {
    let f = fx();
    // the fix is still empty: best effort, no second round
    let script = Script { refine: fenced("SELECT name FROM school WHERE 0"), ..Script::default() };
    let gw = gateway(&script);
    let r = pipes(&gw).refine(&f.ctx(), "SELECT name FROM school WHERE charter = 7".into()).unwrap();
    assert_eq!(script.calls(REFINE).len(), 1);
    assert!(script.calls(REFINE)[0].contains("### Problem:\n\nempty result"));
    assert_eq!(r.sql, "SELECT name FROM school WHERE 0");

    let script = Script { refine: fenced("SELECT name FROM school WHERE 0"), ..Script::default() };
    let gw = gateway(&script);
    let cfg = PipelineConfig { refine_rounds: 3, ..PipelineConfig::default() };
    Pipelines::new(&gw, cfg).unwrap().refine(&f.ctx(), "SELECT 1 WHERE 0".into()).unwrap();
    assert_eq!(script.calls(REFINE).len(), 3);

    let script = Script { refine: "no idea".into(), ..Script::default() };
    let gw = gateway(&script);
    let cfg = PipelineConfig { refine_rounds: 0, ..PipelineConfig::default() };
    let r = Pipelines::new(&gw, cfg).unwrap().refine(&f.ctx(), "SELEC".into()).unwrap();
    assert_eq!((r.sql.as_str(), script.total_calls()), ("SELEC", 0));
}

#[test]
fn intermediate_refines_bad_assembly() {
    let f = fx();
    let script = Script { assemble: fenced("SELECT nme FROM school"), ..Script::default() };
    let gw = gateway(&script);
    let r = pipes(&gw).generate_intermediate(&f.ctx()).unwrap();
    assert_eq!(r.sql, "SELECT name FROM school");
    assert_eq!(r.steps.last().unwrap().step, "refine[1]");
    assert_eq!(r.usage, sum(&r.steps));
}

#[test]
fn usage_grows_with_tier_under_per_char_stub() {
    let f = fx();
    let questions = [
        ("a", "What are the names of charter schools?", ""),
        ("b", "How many students are in grade 9?", "grade refers to student.grade"),
        ("c", "List every district", "x"),
    ];
    for (id, text, hint) in questions {
        let q = query(id, text, hint);
        let ctx = GenContext { query: &q, ..f.ctx() };
        let script = Script::default();
        let gw = gateway(&script);
        let p = pipes(&gw);
        let w = |u: TokenUsage| u.prompt_tokens + 4 * u.completion_tokens;
        let b = w(p.generate_basic(&ctx).unwrap().usage);
        let m = w(p.generate_intermediate(&ctx).unwrap().usage);
        let a = w(p.generate_advanced(&ctx).unwrap().usage);
        assert!(b <= m && m <= a, "{id}: {b} {m} {a}");
    }
}

#[test]
fn all_tiers_replay_deterministically() {
    let f = fx();
    let dir = tempfile::tempdir().unwrap();
    let rec = Gateway::new(GatewayMode::Record, Some(dir.path().into()), Some(Box::new(Script::default())), 2).unwrap();
    let recorded: Vec<_> = Tier::ALL.iter().map(|t| pipes(&rec).generate(*t, &f.ctx()).unwrap()).collect();
    let replay = Gateway::replay(dir.path()).unwrap();
    for _ in 0..2 {
        let again: Vec<_> = Tier::ALL.iter().map(|t| pipes(&replay).generate(*t, &f.ctx()).unwrap()).collect();
        assert_eq!(again, recorded);
    }
    assert_eq!(replay.stats().network_calls, 0);
}
