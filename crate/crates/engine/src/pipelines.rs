//! The three generation tiers.
//!
//! * Basic: one prompt, one completion.
//! * Intermediate: divide into sub-questions, conquer each, assemble, then
//!   refine against the database.
//! * Advanced: Intermediate with synthesized question/SQL examples injected
//!   into every conquer prompt.

use std::path::Path;

use serde::{Deserialize, Serialize};
use tiersql_core::{DatabaseSchema, LinkedSchema, NLQuery, Phase, Tier, TokenUsage};
use tiersql_gateway::{canonical_key, Gateway};
use tiersql_sqlexec::{execute, ExecOptions, ExecOutcome};

use crate::parse::{extract_sql, format_examples, parse_examples, parse_subquestions, SubQuestion, SynthesizedExample};
use crate::prompts::{divide_example, render_tables, RenderOptions, ASSEMBLE, BASIC, CONQUER, DIVIDE, REFINE, SYNTHESIS};
use crate::{to_usage, EngineError, LlmSettings};

pub const DEFAULT_K: usize = 3;
pub const MAX_SUBQUESTIONS: usize = 8;
pub const MAX_REFINE_ROUNDS: u32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SynthesisScope {
    /// One example set per query, shared by every conquer step.
    #[default]
    PerQuery,
    /// A fresh synthesis call before each conquer step.
    PerSubquestion,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    #[serde(flatten)]
    pub llm: LlmSettings,
    /// Examples requested from the synthesis step.
    pub k: usize,
    pub synthesis_scope: SynthesisScope,
    pub refine_rounds: u32,
    pub max_subquestions: usize,
    pub exec: ExecOptions,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            llm: LlmSettings::default(),
            k: DEFAULT_K,
            synthesis_scope: SynthesisScope::default(),
            refine_rounds: 1,
            max_subquestions: MAX_SUBQUESTIONS,
            exec: ExecOptions::default(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), EngineError> {
        if self.k == 0 {
            return Err(EngineError::Config("k must be at least 1".into()));
        }
        if self.refine_rounds > MAX_REFINE_ROUNDS {
            return Err(EngineError::Config(format!("refine_rounds must be at most {MAX_REFINE_ROUNDS}")));
        }
        if self.max_subquestions == 0 {
            return Err(EngineError::Config("max_subquestions must be at least 1".into()));
        }
        Ok(())
    }
}

/// Audit record of one model call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: String,
    pub digest: String,
    pub usage: TokenUsage,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub unfenced: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationResult {
    pub tier: Tier,
    pub sql: String,
    /// Sum over `steps`, phase = generation.
    pub usage: TokenUsage,
    pub steps: Vec<StepRecord>,
    /// Degradations worth knowing about (unfenced SQL, empty synthesis...).
    pub flags: Vec<String>,
}

/// Everything a generator needs about one query.
#[derive(Debug, Clone, Copy)]
pub struct GenContext<'a> {
    pub query: &'a NLQuery,
    pub schema: &'a DatabaseSchema,
    pub linked: &'a LinkedSchema,
    pub db_path: &'a Path,
}

impl GenContext<'_> {
    fn linked_schema_text(&self) -> String {
        render_tables(&self.linked.project(self.schema), &RenderOptions::default())
    }
}

/// Accumulates step records and usage for one generation.
struct Run<'a> {
    gw: &'a Gateway,
    llm: &'a LlmSettings,
    steps: Vec<StepRecord>,
    flags: Vec<String>,
}

impl<'a> Run<'a> {
    fn new(gw: &'a Gateway, llm: &'a LlmSettings) -> Self {
        Self {
            gw,
            llm,
            steps: Vec::new(),
            flags: Vec::new(),
        }
    }

    fn call(&mut self, step: String, prompt: String) -> Result<String, EngineError> {
        let req = self.llm.request(prompt);
        let resp = self.gw.complete(&req)?;
        self.steps.push(StepRecord {
            step,
            digest: canonical_key(&req),
            usage: to_usage(Phase::Generation, &resp.usage),
            unfenced: false,
        });
        Ok(resp.text)
    }

    /// Calls and extracts SQL, failing on an empty answer.
    fn call_sql(&mut self, step: String, prompt: String) -> Result<String, EngineError> {
        let text = self.call(step.clone(), prompt)?;
        let extracted = extract_sql(&text).ok_or(EngineError::EmptySql { step })?;
        if !extracted.fenced {
            self.mark_unfenced();
        }
        Ok(extracted.sql)
    }

    fn mark_unfenced(&mut self) {
        if let Some(last) = self.steps.last_mut() {
            last.unfenced = true;
            self.flags.push(format!("unfenced:{}", last.step));
        }
    }

    fn finish(self, tier: Tier, sql: String) -> Result<GenerationResult, EngineError> {
        let mut usage = TokenUsage::zero(Phase::Generation);
        for s in &self.steps {
            usage = usage.merge(s.usage)?;
        }
        Ok(GenerationResult {
            tier,
            sql,
            usage,
            steps: self.steps,
            flags: self.flags,
        })
    }
}

pub struct Pipelines<'g> {
    gw: &'g Gateway,
    cfg: PipelineConfig,
}

impl<'g> Pipelines<'g> {
    pub fn new(gw: &'g Gateway, cfg: PipelineConfig) -> Result<Self, EngineError> {
        cfg.validate()?;
        Ok(Self { gw, cfg })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.cfg
    }

    pub fn generate(&self, tier: Tier, ctx: &GenContext<'_>) -> Result<GenerationResult, EngineError> {
        match tier {
            Tier::Basic => self.generate_basic(ctx),
            Tier::Intermediate => self.generate_intermediate(ctx),
            Tier::Advanced => self.generate_advanced(ctx),
        }
    }

    pub fn basic_prompt(&self, ctx: &GenContext<'_>) -> String {
        let schema = ctx.linked_schema_text();
        BASIC.render(&[("schema", &schema), ("evidence", &ctx.query.hint), ("query", &ctx.query.question)])
    }

    pub fn generate_basic(&self, ctx: &GenContext<'_>) -> Result<GenerationResult, EngineError> {
        let mut run = Run::new(self.gw, &self.cfg.llm);
        let sql = run.call_sql("basic".into(), self.basic_prompt(ctx))?;
        run.finish(Tier::Basic, sql)
    }

    pub fn generate_intermediate(&self, ctx: &GenContext<'_>) -> Result<GenerationResult, EngineError> {
        self.divide_and_conquer(Tier::Intermediate, ctx)
    }

    pub fn generate_advanced(&self, ctx: &GenContext<'_>) -> Result<GenerationResult, EngineError> {
        self.divide_and_conquer(Tier::Advanced, ctx)
    }

    fn divide_and_conquer(&self, tier: Tier, ctx: &GenContext<'_>) -> Result<GenerationResult, EngineError> {
        let mut run = Run::new(self.gw, &self.cfg.llm);
        let schema = ctx.linked_schema_text();
        let subs = self.divide_in(&mut run, ctx, &schema)?;

        let synthesize = tier == Tier::Advanced;
        let mut shared = Vec::new();
        if synthesize && self.cfg.synthesis_scope == SynthesisScope::PerQuery {
            shared = self.synthesize_in(&mut run, &schema, "synthesize".into())?;
        }

        let mut solved = Vec::with_capacity(subs.len());
        for sub in &subs {
            let examples = if synthesize && self.cfg.synthesis_scope == SynthesisScope::PerSubquestion {
                self.synthesize_in(&mut run, &schema, format!("synthesize[{}]", sub.index))?
            } else {
                shared.clone()
            };
            let prompt = conquer_prompt(&schema, &sub.text, &ctx.query.hint, &examples);
            let text = run.call(format!("conquer[{}]", sub.index), prompt)?;
            let extracted = extract_sql(&text).ok_or_else(|| EngineError::EmptySql {
                step: format!("conquer[{}]", sub.index),
            })?;
            if !extracted.fenced {
                run.mark_unfenced();
            }
            solved.push((sub, text));
        }

        let subs_text = solved
            .iter()
            .map(|(sub, output)| format!("Sub-question {}: {}\n{}", sub.index, sub.text, output.trim()))
            .collect::<Vec<_>>()
            .join("\n\n");
        let prompt = ASSEMBLE.render(&[
            ("schema", &schema),
            ("query", &ctx.query.question),
            ("evidence", &ctx.query.hint),
            ("subs", &subs_text),
        ]);
        let assembled = run.call_sql("assemble".into(), prompt)?;
        let sql = self.refine_in(&mut run, ctx, &schema, assembled)?;
        run.finish(tier, sql)
    }

    pub fn divide_prompt(&self, ctx: &GenContext<'_>, schema: &str) -> String {
        let ex = divide_example();
        DIVIDE.render(&[
            ("example_database_schema", &ex.schema),
            ("example_question", ex.question),
            ("sub question 1", ex.subs[0]),
            ("sub question 2", ex.subs[1]),
            ("sub question 3", ex.subs[2]),
            ("schema", schema),
            ("query", &ctx.query.question),
            ("evidence", &ctx.query.hint),
        ])
    }

    fn divide_in(&self, run: &mut Run<'_>, ctx: &GenContext<'_>, schema: &str) -> Result<Vec<SubQuestion>, EngineError> {
        let text = run.call("divide".into(), self.divide_prompt(ctx, schema))?;
        let subs = parse_subquestions(&text, self.cfg.max_subquestions);
        if subs.is_empty() {
            run.flags.push("divide_degenerate".into());
            return Ok(vec![SubQuestion {
                index: 1,
                text: ctx.query.question.clone(),
            }]);
        }
        Ok(subs)
    }

    fn synthesize_in(&self, run: &mut Run<'_>, schema: &str, step: String) -> Result<Vec<SynthesizedExample>, EngineError> {
        let k = self.cfg.k.to_string();
        let prompt = SYNTHESIS.render(&[("k", &k), ("TARGET_DATABASE_SCHEMA", schema)]);
        let text = run.call(step.clone(), prompt)?;
        let examples = parse_examples(&text, self.cfg.k);
        if examples.is_empty() {
            run.flags.push(format!("synthesis_empty:{step}"));
        } else if examples.len() < self.cfg.k {
            run.flags.push(format!("synthesis_short:{step}:{}/{}", examples.len(), self.cfg.k));
        }
        Ok(examples)
    }

    /// Standalone synthesis call, as used by the Advanced tier.
    pub fn synthesize_examples(&self, ctx: &GenContext<'_>) -> Result<(Vec<SynthesizedExample>, GenerationResult), EngineError> {
        let mut run = Run::new(self.gw, &self.cfg.llm);
        let ex = self.synthesize_in(&mut run, &ctx.linked_schema_text(), "synthesize".into())?;
        Ok((ex, run.finish(Tier::Advanced, String::new())?))
    }

    /// Runs the corrective loop on `sql` alone and reports the calls made.
    pub fn refine(&self, ctx: &GenContext<'_>, sql: String) -> Result<GenerationResult, EngineError> {
        let mut run = Run::new(self.gw, &self.cfg.llm);
        let sql = self.refine_in(&mut run, ctx, &ctx.linked_schema_text(), sql)?;
        run.finish(Tier::Intermediate, sql)
    }

    fn refine_in(&self, run: &mut Run<'_>, ctx: &GenContext<'_>, schema: &str, mut sql: String) -> Result<String, EngineError> {
        for round in 1..=self.cfg.refine_rounds {
            let reason = match execute(ctx.db_path, &sql, &self.cfg.exec)? {
                ExecOutcome::Ok { result } if !result.is_empty() => return Ok(sql),
                ExecOutcome::Ok { .. } => "empty result".to_string(),
                ExecOutcome::Error { message } => message,
                ExecOutcome::Timeout => format!("execution timed out after {} ms", self.cfg.exec.timeout_ms),
            };
            let prompt = REFINE.render(&[
                ("schema", schema),
                ("query", &ctx.query.question),
                ("evidence", &ctx.query.hint),
                ("sql", &sql),
                ("reason", &reason),
            ]);
            let text = run.call(format!("refine[{round}]"), prompt)?;
            match extract_sql(&text) {
                Some(e) => {
                    if !e.fenced {
                        run.mark_unfenced();
                    }
                    sql = e.sql;
                }
                None => run.flags.push(format!("refine_empty:{round}")),
            }
        }
        Ok(sql)
    }
}

pub fn conquer_prompt(schema: &str, question: &str, hint: &str, examples: &[SynthesizedExample]) -> String {
    let examples = format_examples(examples);
    CONQUER.render(&[("schema", schema), ("examples", &examples), ("query", question), ("evidence", hint)])
}
