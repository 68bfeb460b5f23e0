//! Aggregates run traces into per-method metric rows.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::metrics::{self, DisagreementMatrix, MetricError};
use crate::model::{Difficulty, Phase, RunTrace, Tier};
use crate::pareto::{pareto_frontier, ParetoPoint};

/// Default output-token multiplier.
pub const DEFAULT_MU: f64 = 4.0;

#[derive(Debug, Clone)]
pub struct MethodTraces<'a> {
    pub name: String,
    pub traces: &'a [RunTrace],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportOptions {
    pub mu: f64,
    pub phases: Vec<Phase>,
    /// Method names of the always-Basic and always-Advanced runs.
    pub basic: Option<String>,
    pub advanced: Option<String>,
}

impl Default for ReportOptions {
    fn default() -> Self {
        Self {
            mu: DEFAULT_MU,
            phases: vec![Phase::Generation],
            basic: None,
            advanced: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DifficultyCell {
    pub correct: u64,
    pub total: u64,
    pub ex: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodRow {
    pub method: String,
    pub queries: u64,
    /// Queries with a correctness verdict (gold SQL present).
    pub evaluated: u64,
    pub correct: u64,
    pub ex_total: Option<f64>,
    pub ex_by_difficulty: BTreeMap<Difficulty, DifficultyCell>,
    pub avg_tokens: f64,
    pub pgr: Option<f64>,
    pub tep: Option<f64>,
    pub utr: Option<f64>,
    pub agreement: Option<f64>,
    pub disagreement: Option<DisagreementMatrix>,
    /// Queries routed to each tier, in cost order.
    pub tier_counts: [u64; 3],
    pub total_wall_clock_ms: u64,
    pub errors: u64,
    pub estimated_usage: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub mu: f64,
    pub phases: Vec<Phase>,
    pub rows: Vec<MethodRow>,
    pub pareto_frontier: Vec<String>,
    /// Kendall's tau of (metric, EX) across methods, when computable.
    pub correlations: BTreeMap<String, f64>,
    pub notices: Vec<String>,
}

impl MetricReport {
    pub fn row(&self, method: &str) -> Option<&MethodRow> {
        self.rows.iter().find(|r| r.method == method)
    }

    pub fn pareto_points(&self) -> Vec<ParetoPoint<f64>> {
        self.rows
            .iter()
            .filter_map(|r| r.ex_total.map(|ex| ParetoPoint::new(r.method.clone(), ex, r.avg_tokens)))
            .collect()
    }
}

/// Oracle label per query from the three single-tier runs: the cheapest
/// tier that was correct, Advanced when none was.
pub fn oracle_labels_from_baselines(
    basic: &[RunTrace],
    intermediate: &[RunTrace],
    advanced: &[RunTrace],
) -> HashMap<String, Tier> {
    let index = |ts: &[RunTrace]| -> HashMap<String, bool> {
        ts.iter()
            .filter_map(|t| t.correct.map(|c| (t.query_id.clone(), c)))
            .collect()
    };
    let runs = [index(basic), index(intermediate), index(advanced)];
    let mut labels = HashMap::new();
    for id in runs[0].keys() {
        if !runs.iter().all(|r| r.contains_key(id)) {
            continue;
        }
        let label = Tier::ALL
            .into_iter()
            .find(|t| runs[t.index()][id])
            .unwrap_or(Tier::Advanced);
        labels.insert(id.clone(), label);
    }
    labels
}

fn summarize(m: &MethodTraces<'_>, opts: &ReportOptions, oracle: Option<&HashMap<String, Tier>>) -> Result<MethodRow, MetricError> {
    let traces = m.traces;
    let verdicts: Vec<bool> = traces.iter().filter_map(|t| t.correct).collect();
    let ex_total = metrics::ex::<f64>(&verdicts).ok();

    let mut by_diff: BTreeMap<Difficulty, (u64, u64)> = BTreeMap::new();
    for t in traces {
        if let (Some(d), Some(c)) = (t.difficulty, t.correct) {
            let cell = by_diff.entry(d).or_default();
            cell.1 += 1;
            if c {
                cell.0 += 1;
            }
        }
    }
    let ex_by_difficulty = by_diff
        .into_iter()
        .map(|(d, (correct, total))| {
            (
                d,
                DifficultyCell {
                    correct,
                    total,
                    ex: correct as f64 / total as f64,
                },
            )
        })
        .collect();

    let avg_tokens = metrics::avg_tokens(traces, opts.mu, &opts.phases)?;

    let mut oracle_tiers = Vec::new();
    let mut routed_tiers = Vec::new();
    for t in traces {
        let label = t.oracle_label.or_else(|| oracle.and_then(|o| o.get(&t.query_id).copied()));
        if let Some(label) = label {
            oracle_tiers.push(label);
            routed_tiers.push(t.chosen_tier);
        }
    }
    let disagreement = if oracle_tiers.is_empty() {
        None
    } else {
        Some(metrics::disagreement(&oracle_tiers, &routed_tiers)?)
    };

    let mut tier_counts = [0u64; 3];
    for t in traces {
        tier_counts[t.chosen_tier.index()] += 1;
    }

    Ok(MethodRow {
        method: m.name.clone(),
        queries: traces.len() as u64,
        evaluated: verdicts.len() as u64,
        correct: verdicts.iter().filter(|v| **v).count() as u64,
        ex_total,
        ex_by_difficulty,
        avg_tokens,
        pgr: None,
        tep: None,
        utr: disagreement.as_ref().and_then(|d| metrics::utr(d).ok()),
        agreement: disagreement.as_ref().and_then(|d| d.agreement().ok()),
        disagreement,
        tier_counts,
        total_wall_clock_ms: traces.iter().map(|t| t.wall_clock_ms).sum(),
        errors: traces.iter().filter(|t| t.error.is_some()).count() as u64,
        estimated_usage: traces.iter().flat_map(|t| &t.usage).any(|u| u.estimated),
    })
}

/// Builds the full report. PGR and TEP are filled only when the baseline
/// methods are named and present; otherwise a notice explains the gap.
pub fn build_report(
    methods: &[MethodTraces<'_>],
    opts: &ReportOptions,
    oracle: Option<&HashMap<String, Tier>>,
) -> Result<MetricReport, MetricError> {
    if methods.is_empty() || methods.iter().all(|m| m.traces.is_empty()) {
        return Err(MetricError::Undefined("report"));
    }
    let mut notices = Vec::new();
    let mut rows = Vec::new();
    for m in methods {
        if m.traces.is_empty() {
            notices.push(format!("method `{}` has no traces and was skipped", m.name));
            continue;
        }
        rows.push(summarize(m, opts, oracle)?);
    }

    let find = |name: &Option<String>| name.as_ref().and_then(|n| rows.iter().find(|r| &r.method == n)).cloned();
    let basic = find(&opts.basic);
    let advanced = find(&opts.advanced);
    match (&basic, &advanced) {
        (Some(b), Some(a)) => {
            for row in rows.iter_mut() {
                let is_base = Some(&row.method) == opts.basic.as_ref() || Some(&row.method) == opts.advanced.as_ref();
                if let (Some(ex_r), Some(ex_b), Some(ex_a)) = (row.ex_total, b.ex_total, a.ex_total) {
                    if !is_base {
                        match metrics::pgr(ex_r, ex_b, ex_a) {
                            Ok(v) => row.pgr = Some(v),
                            Err(e) => notices.push(format!("PGR for `{}` omitted: {e}", row.method)),
                        }
                    }
                }
                if Some(&row.method) != opts.basic.as_ref() {
                    if let (Some(ex_g), Some(ex_b)) = (row.ex_total, b.ex_total) {
                        match metrics::tep(ex_g, ex_b, row.avg_tokens, b.avg_tokens) {
                            Ok(v) => row.tep = Some(v),
                            Err(e) => notices.push(format!("TEP for `{}` omitted: {e}", row.method)),
                        }
                    }
                }
            }
        }
        (Some(b), None) => {
            notices.push("no always-Advanced baseline: PGR omitted".into());
            for row in rows.iter_mut().filter(|r| r.method != b.method) {
                if let (Some(ex_g), Some(ex_b)) = (row.ex_total, b.ex_total) {
                    row.tep = metrics::tep(ex_g, ex_b, row.avg_tokens, b.avg_tokens).ok();
                }
            }
        }
        _ => notices.push("no always-Basic baseline: PGR and TEP omitted".into()),
    }

    let pareto_frontier = pareto_frontier(
        &rows
            .iter()
            .filter_map(|r| r.ex_total.map(|ex| ParetoPoint::new(r.method.clone(), ex, r.avg_tokens)))
            .collect::<Vec<_>>(),
    )
    .into_iter()
    .map(|p| p.method)
    .collect();

    let mut correlations = BTreeMap::new();
    for (name, pick) in [
        ("utr_vs_ex", (|r: &MethodRow| r.utr) as fn(&MethodRow) -> Option<f64>),
        ("agreement_vs_ex", |r: &MethodRow| r.agreement),
        ("pgr_vs_tep", |r: &MethodRow| r.pgr),
    ] {
        let pairs: Vec<(f64, f64)> = rows
            .iter()
            .filter_map(|r| {
                let other = if name == "pgr_vs_tep" { r.tep } else { r.ex_total };
                Some((pick(r)?, other?))
            })
            .collect();
        let (xs, ys): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        if let Ok(tau) = metrics::kendall_tau(&xs, &ys) {
            correlations.insert(name.to_string(), tau);
        }
    }

    Ok(MetricReport {
        mu: opts.mu,
        phases: opts.phases.clone(),
        rows,
        pareto_frontier,
        correlations,
        notices,
    })
}
