//! Link, route, generate and score every query of a dataset.

use std::collections::HashSet;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Instant;

use tiersql_core::metrics::weighted_tokens;
use tiersql_core::routers::Router;
use tiersql_core::{LinkedSchema, NLQuery, Phase, Provenance, RunTrace, Tier, TokenUsage};
use tiersql_engine::{link, GenContext, LinkerConfig, PipelineConfig, Pipelines};
use tiersql_gateway::Gateway;
use tiersql_sqlexec::{ex_match, ExecOptions};

use crate::dataset::Dataset;
use crate::pool::run_pool;
use crate::trace::{recover_traces, rewrite, sort_by_dataset, TraceWriter};
use crate::HarnessError;

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub workers: usize,
    pub mu: f64,
    /// Stop scheduling once this many weighted tokens were spent.
    pub max_weighted_tokens: Option<u64>,
    /// Record wall-clock time per query. Off for cache replays, where it
    /// would only make traces differ between identical runs.
    pub record_timing: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            workers: 4,
            mu: tiersql_core::report::DEFAULT_MU,
            max_weighted_tokens: None,
            record_timing: true,
        }
    }
}

pub struct Runner<'a> {
    pub dataset: &'a Dataset,
    pub gateway: &'a Gateway,
    pub router: &'a dyn Router,
    pub linker: &'a LinkerConfig,
    pub pipelines: &'a PipelineConfig,
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    /// Final trace set, in dataset order.
    pub traces: Vec<RunTrace>,
    pub resumed: usize,
    pub executed: usize,
    /// Queries left unstarted because the budget ran out.
    pub unstarted: usize,
}

/// Whether the predicted SQL matches gold. `Err` means the gold side could
/// not be evaluated.
pub fn score_sql(q: &NLQuery, sql: &str, db: &Path, opts: &ExecOptions) -> Result<Option<bool>, String> {
    match &q.gold_sql {
        None => Ok(None),
        Some(gold) => ex_match(sql, gold, db, opts).map(Some).map_err(|e| e.to_string()),
    }
}

impl Runner<'_> {
    /// Runs one query end to end. Never fails: problems land in `error`.
    pub fn run_query(&self, q: &NLQuery, record_timing: bool) -> RunTrace {
        let start = Instant::now();
        let mut trace = RunTrace {
            query_id: q.id.clone(),
            db_id: q.db_id.clone(),
            difficulty: q.difficulty,
            router: self.router.name().to_string(),
            chosen_tier: Tier::Advanced,
            scores: None,
            link_provenance: Provenance::FallbackFull,
            predicted_sql: String::new(),
            usage: Vec::new(),
            correct: q.gold_sql.as_ref().map(|_| false),
            wall_clock_ms: 0,
            oracle_label: None,
            error: None,
        };
        let mut errors = Vec::new();
        self.fill(q, &mut trace, &mut errors);
        if !errors.is_empty() {
            trace.error = Some(errors.join("; "));
        }
        if record_timing {
            trace.wall_clock_ms = start.elapsed().as_millis() as u64;
        }
        trace
    }

    fn fill(&self, q: &NLQuery, trace: &mut RunTrace, errors: &mut Vec<String>) {
        let Some(schema) = self.dataset.schema(&q.db_id) else {
            errors.push(format!("unknown database `{}`", q.db_id));
            return;
        };
        let db = self.dataset.db_path(&q.db_id);

        let linked = match link(q, schema, self.gateway, self.linker) {
            Ok(out) => {
                trace.usage.push(out.usage);
                out.linked
            }
            Err(e) => {
                errors.push(format!("linking: {e}"));
                LinkedSchema::fallback_full(schema)
            }
        };
        trace.link_provenance = linked.provenance;

        // A router failure leaves the placeholder tier and skips generation.
        let decision = match self.router.route(&q.router_view(&linked)) {
            Ok(d) => d,
            Err(e) => {
                errors.push(format!("routing: {e}"));
                return;
            }
        };
        trace.chosen_tier = decision.tier;
        trace.scores = decision.scores;
        if decision.router_usage != TokenUsage::zero(Phase::Routing) {
            trace.usage.push(decision.router_usage);
        }

        let pipes = match Pipelines::new(self.gateway, self.pipelines.clone()) {
            Ok(p) => p,
            Err(e) => {
                errors.push(e.to_string());
                return;
            }
        };
        let ctx = GenContext {
            query: q,
            schema,
            linked: &linked,
            db_path: &db,
        };
        match pipes.generate(decision.tier, &ctx) {
            Ok(gen) => {
                trace.usage.push(gen.usage);
                trace.predicted_sql = gen.sql;
            }
            Err(e) => {
                errors.push(format!("generation: {e}"));
                return;
            }
        }
        match score_sql(q, &trace.predicted_sql, &db, &self.pipelines.exec) {
            Ok(c) => trace.correct = c,
            Err(e) => {
                trace.correct = None;
                errors.push(format!("gold: {e}"));
            }
        }
    }

    /// Runs every query not already in `trace_path`, appending as results
    /// arrive, then rewrites the file in dataset order.
    pub fn run(&self, trace_path: &Path, opts: &RunOptions) -> Result<RunSummary, HarnessError> {
        let ids: HashSet<&str> = self.dataset.queries.iter().map(|q| q.id.as_str()).collect();
        let mut traces = recover_traces(trace_path)?;
        if let Some(stray) = traces.iter().find(|t| !ids.contains(t.query_id.as_str())) {
            return Err(HarnessError::Config(format!(
                "{} holds query `{}` which is not in the dataset",
                trace_path.display(),
                stray.query_id
            )));
        }
        let done: HashSet<String> = traces.iter().map(|t| t.query_id.clone()).collect();
        let resumed = done.len();
        let pending: Vec<&NLQuery> = self.dataset.queries.iter().filter(|q| !done.contains(&q.id)).collect();

        let spent = AtomicU64::new(
            traces
                .iter()
                .flat_map(|t| &t.usage)
                .map(|u| weighted_tokens::<f64>(u, opts.mu).round() as u64)
                .sum(),
        );
        let over_budget = || opts.max_weighted_tokens.is_some_and(|cap| spent.load(Ordering::SeqCst) >= cap);

        let mut writer = TraceWriter::append(trace_path)?;
        let mut executed = 0;
        run_pool(
            &pending,
            opts.workers,
            over_budget,
            |q| {
                let t = self.run_query(q, opts.record_timing);
                let cost: f64 = t.usage.iter().map(|u| weighted_tokens::<f64>(u, opts.mu)).sum();
                spent.fetch_add(cost.round() as u64, Ordering::SeqCst);
                t
            },
            |t| {
                executed += 1;
                writer.write(&t)?;
                traces.push(t);
                Ok(())
            },
        )?;
        drop(writer);

        let order: Vec<String> = self.dataset.queries.iter().map(|q| q.id.clone()).collect();
        sort_by_dataset(&mut traces, &order);
        rewrite(trace_path, &traces)?;
        Ok(RunSummary {
            unstarted: pending.len() - executed,
            traces,
            resumed,
            executed,
        })
    }
}

/// Re-executes stored predictions against gold and updates `correct`.
/// Returns how many verdicts changed.
pub fn reevaluate(dataset: &Dataset, traces: &mut [RunTrace], exec: &ExecOptions, workers: usize) -> Result<usize, HarnessError> {
    let by_id: std::collections::HashMap<&str, &NLQuery> = dataset.queries.iter().map(|q| (q.id.as_str(), q)).collect();
    if let Some(t) = traces.iter().find(|t| !by_id.contains_key(t.query_id.as_str())) {
        return Err(HarnessError::Config(format!("query `{}` is not in the dataset", t.query_id)));
    }
    let items: Vec<usize> = (0..traces.len()).collect();
    let mut verdicts = vec![None; traces.len()];
    {
        let traces = &*traces;
        run_pool(
            &items,
            workers,
            || false,
            |&i| {
                let t = &traces[i];
                let q = by_id[t.query_id.as_str()];
                let v = if t.predicted_sql.is_empty() {
                    Ok(q.gold_sql.as_ref().map(|_| false))
                } else {
                    score_sql(q, &t.predicted_sql, &dataset.db_path(&q.db_id), exec)
                };
                (i, v)
            },
            |(i, v)| {
                verdicts[i] = Some(v);
                Ok(())
            },
        )?;
    }
    let mut changed = 0;
    for (t, v) in traces.iter_mut().zip(verdicts) {
        let c = v.expect("every trace evaluated").unwrap_or_else(|e| {
            log::warn!("query `{}`: {e}", t.query_id);
            None
        });
        changed += usize::from(t.correct != c);
        t.correct = c;
    }
    Ok(changed)
}
