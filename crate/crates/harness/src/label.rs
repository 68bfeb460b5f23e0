//! Waterfall labeling over a dataset and schema-linking evaluation.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};
use tiersql_core::labeler::{waterfall_label, LabeledExample, TierOutcome};
use tiersql_core::metrics::{extract_gold_columns, linking_quality, weighted_tokens};
use tiersql_core::{LinkedSchema, NLQuery, TokenUsage};
use tiersql_engine::{link, GenContext, LinkerConfig, PipelineConfig, Pipelines};
use tiersql_gateway::Gateway;

use crate::config::Budget;
use crate::dataset::Dataset;
use crate::pool::run_pool;
use crate::run::score_sql;
use crate::HarnessError;

#[derive(Debug, Clone)]
pub struct LabelSummary {
    /// Labeled examples in dataset order.
    pub examples: Vec<LabeledExample>,
    /// Query id and reason for every query that produced no example.
    pub skipped: Vec<(String, String)>,
    pub unstarted: usize,
    pub weighted_tokens: u64,
}

pub struct Labeler<'a> {
    pub dataset: &'a Dataset,
    pub gateway: &'a Gateway,
    pub linker: &'a LinkerConfig,
    pub pipelines: &'a PipelineConfig,
    pub mu: f64,
}

impl Labeler<'_> {
    fn label_one(&self, q: &NLQuery) -> Result<(LabeledExample, u64), String> {
        if q.gold_sql.is_none() {
            return Err("no gold SQL".into());
        }
        let schema = self.dataset.schema(&q.db_id).ok_or("unknown database")?;
        let db = self.dataset.db_path(&q.db_id);
        let out = link(q, schema, self.gateway, self.linker).map_err(|e| format!("linking: {e}"))?;
        let pipes = Pipelines::new(self.gateway, self.pipelines.clone()).map_err(|e| e.to_string())?;
        let ctx = GenContext {
            query: q,
            schema,
            linked: &out.linked,
            db_path: &db,
        };
        let mut gold_error = None;
        let ex = waterfall_label(q, &out.linked, |tier| {
            let gen = pipes.generate(tier, &ctx).map_err(|e| e.to_string())?;
            let correct = match score_sql(q, &gen.sql, &db, &self.pipelines.exec) {
                Ok(c) => c.unwrap_or(false),
                Err(e) => {
                    gold_error = Some(e);
                    false
                }
            };
            Ok(TierOutcome {
                sql: gen.sql,
                correct,
                usage: gen.usage,
                error: None,
            })
        })
        .map_err(|e| e.to_string())?;
        if let Some(e) = gold_error {
            return Err(format!("gold: {e}"));
        }
        let cost = weighted_tokens::<f64>(&out.usage, self.mu) + weighted_tokens::<f64>(&ex.labeling_usage(), self.mu);
        Ok((ex, cost.round() as u64))
    }

    /// Budget caps are mandatory here: labeling runs every tier on hard
    /// queries and is the most expensive command.
    pub fn run(&self, budget: &Budget, workers: usize) -> Result<LabelSummary, HarnessError> {
        let (Some(max_queries), Some(max_tokens)) = (budget.max_queries, budget.max_weighted_tokens) else {
            return Err(HarnessError::Config(
                "labeling requires budget.max_queries and budget.max_weighted_tokens".into(),
            ));
        };
        let queries: Vec<&NLQuery> = self.dataset.queries.iter().take(max_queries).collect();
        let spent = AtomicU64::new(0);
        let mut results: Vec<(String, Result<LabeledExample, String>)> = Vec::new();
        run_pool(
            &queries,
            workers,
            || spent.load(Ordering::SeqCst) >= max_tokens,
            |q| {
                let r = self.label_one(q).map(|(ex, cost)| {
                    spent.fetch_add(cost, Ordering::SeqCst);
                    ex
                });
                (q.id.clone(), r)
            },
            |r| {
                results.push(r);
                Ok(())
            },
        )?;
        let rank: HashMap<&str, usize> = queries.iter().enumerate().map(|(i, q)| (q.id.as_str(), i)).collect();
        results.sort_by_key(|(id, _)| rank[id.as_str()]);
        let unstarted = queries.len() - results.len() + (self.dataset.queries.len() - queries.len());
        let mut examples = Vec::new();
        let mut skipped = Vec::new();
        for (id, r) in results {
            match r {
                Ok(ex) => examples.push(ex),
                Err(e) => skipped.push((id, e)),
            }
        }
        Ok(LabelSummary {
            examples,
            skipped,
            unstarted,
            weighted_tokens: spent.into_inner(),
        })
    }
}

/// One line of the `link` command's output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkRecord {
    pub query_id: String,
    pub db_id: String,
    pub linked: LinkedSchema,
    pub usage: Option<TokenUsage>,
    pub n_tables: usize,
    pub n_columns: usize,
    /// Against columns mentioned by gold SQL, when any were found.
    pub recall: Option<f64>,
    pub column_reduction: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

pub fn link_dataset(
    dataset: &Dataset,
    gateway: &Gateway,
    linker: &LinkerConfig,
    workers: usize,
) -> Result<Vec<LinkRecord>, HarnessError> {
    let queries: Vec<&NLQuery> = dataset.queries.iter().collect();
    let mut out = Vec::new();
    run_pool(
        &queries,
        workers,
        || false,
        |q| {
            let Some(schema) = dataset.schema(&q.db_id) else {
                return LinkRecord {
                    query_id: q.id.clone(),
                    db_id: q.db_id.clone(),
                    linked: LinkedSchema { entries: Vec::new(), provenance: tiersql_core::Provenance::FallbackFull },
                    usage: None,
                    n_tables: 0,
                    n_columns: 0,
                    recall: None,
                    column_reduction: None,
                    error: Some("unknown database".into()),
                };
            };
            let (linked, usage, error) = match link(q, schema, gateway, linker) {
                Ok(o) => (o.linked, Some(o.usage), None),
                Err(e) => (LinkedSchema::fallback_full(schema), None, Some(e.to_string())),
            };
            let gold = q.gold_sql.as_deref().map(|s| extract_gold_columns(s, schema)).unwrap_or_default();
            let quality = linking_quality::<f64>(&linked, &gold, schema).ok();
            LinkRecord {
                query_id: q.id.clone(),
                db_id: q.db_id.clone(),
                n_tables: linked.table_count(),
                n_columns: linked.column_count(),
                linked,
                usage,
                recall: quality.map(|q| q.recall),
                column_reduction: quality.map(|q| q.column_reduction),
                error,
            }
        },
        |r| {
            out.push(r);
            Ok(())
        },
    )?;
    let rank: HashMap<&str, usize> = queries.iter().enumerate().map(|(i, q)| (q.id.as_str(), i)).collect();
    out.sort_by_key(|r| rank[r.query_id.as_str()]);
    Ok(out)
}
