//! Execution accuracy, weighted token cost, performance gap recovered, token
//! elasticity of performance, disagreement matrices and the upper
//! triangular ratio, plus schema-linking quality.
//!
//! All functions work on fractions or percentages alike: PGR and TEP are
//! ratios of differences, so the scale cancels.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{DatabaseSchema, LinkedSchema, Phase, RunTrace, Tier, TokenUsage};
use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MetricError {
    #[error("{0} is undefined on empty input")]
    Undefined(&'static str),
    #[error("performance gap is zero (EX of advanced equals EX of basic)")]
    DegenerateGap,
    #[error("token cost of the method equals the baseline cost")]
    DegenerateCost,
    #[error("baseline EX and baseline token cost must both be positive")]
    UndefinedBaseline,
    #[error("output-token multiplier must be non-negative")]
    NegativeMultiplier,
    #[error("length mismatch: {left} oracle labels vs {right} routed tiers")]
    LengthMismatch { left: usize, right: usize },
}

pub type Result<T> = std::result::Result<T, MetricError>;

/// Fraction of `true` verdicts.
pub fn ex<S: Scalar>(verdicts: &[bool]) -> Result<S> {
    if verdicts.is_empty() {
        return Err(MetricError::Undefined("EX"));
    }
    let hits = verdicts.iter().filter(|v| **v).count() as u64;
    Ok(S::from_count(hits) / S::from_count(verdicts.len() as u64))
}

/// `T = T_in + mu * T_out`.
pub fn weighted_tokens<S: Scalar>(usage: &TokenUsage, mu: S) -> S {
    S::from_count(usage.prompt_tokens) + mu * S::from_count(usage.completion_tokens)
}

/// Mean weighted cost per query, counting only the selected phases.
pub fn avg_tokens<S: Scalar>(traces: &[RunTrace], mu: S, phases: &[Phase]) -> Result<S> {
    if traces.is_empty() {
        return Err(MetricError::Undefined("average token cost"));
    }
    if mu < S::zero() {
        return Err(MetricError::NegativeMultiplier);
    }
    let total = traces
        .iter()
        .flat_map(|t| t.usage.iter())
        .filter(|u| phases.contains(&u.phase))
        .fold(S::zero(), |acc, u| acc + weighted_tokens(u, mu));
    Ok(total / S::from_count(traces.len() as u64))
}

/// `(ex_r - ex_b) / (ex_a - ex_b)`.
pub fn pgr<S: Scalar>(ex_r: S, ex_b: S, ex_a: S) -> Result<S> {
    let gap = ex_a - ex_b;
    if gap == S::zero() {
        return Err(MetricError::DegenerateGap);
    }
    Ok((ex_r - ex_b) / gap)
}

/// Relative EX gain over the basic pipeline divided by relative increase in
/// average weighted token cost.
pub fn tep<S: Scalar>(ex_g: S, ex_b: S, t_g: S, t_b: S) -> Result<S> {
    if ex_b <= S::zero() || t_b <= S::zero() {
        return Err(MetricError::UndefinedBaseline);
    }
    if t_g == t_b {
        return Err(MetricError::DegenerateCost);
    }
    Ok(((ex_g - ex_b) / ex_b) / ((t_g - t_b) / t_b))
}

/// 3x3 counts; rows are oracle labels, columns routed tiers, both in cost
/// order.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DisagreementMatrix {
    pub counts: [[u64; 3]; 3],
}

impl DisagreementMatrix {
    pub fn from_counts(counts: [[u64; 3]; 3]) -> Self {
        Self { counts }
    }

    pub fn record(&mut self, oracle: Tier, routed: Tier) {
        self.counts[oracle.index()][routed.index()] += 1;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn diagonal(&self) -> u64 {
        (0..3).map(|i| self.counts[i][i]).sum()
    }

    pub fn upper_including_diagonal(&self) -> u64 {
        (0..3).flat_map(|i| (i..3).map(move |j| (i, j))).map(|(i, j)| self.counts[i][j]).sum()
    }

    pub fn transpose(&self) -> Self {
        let mut t = [[0; 3]; 3];
        for (i, row) in self.counts.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                t[j][i] = *v;
            }
        }
        Self { counts: t }
    }

    /// Fraction of queries where router and oracle agree.
    pub fn agreement<S: Scalar>(&self) -> Result<S> {
        let total = self.total();
        if total == 0 {
            return Err(MetricError::Undefined("agreement"));
        }
        Ok(S::from_count(self.diagonal()) / S::from_count(total))
    }
}

/// Tallies oracle labels against routed tiers.
pub fn disagreement(oracle: &[Tier], routed: &[Tier]) -> Result<DisagreementMatrix> {
    if oracle.len() != routed.len() {
        return Err(MetricError::LengthMismatch {
            left: oracle.len(),
            right: routed.len(),
        });
    }
    let mut m = DisagreementMatrix::default();
    for (o, r) in oracle.iter().zip(routed) {
        m.record(*o, *r);
    }
    Ok(m)
}

/// Share of the matrix mass on or above the diagonal.
pub fn utr<S: Scalar>(m: &DisagreementMatrix) -> Result<S> {
    let total = m.total();
    if total == 0 {
        return Err(MetricError::Undefined("UTR"));
    }
    Ok(S::from_count(m.upper_including_diagonal()) / S::from_count(total))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkingQuality<S> {
    pub recall: S,
    pub column_reduction: S,
}

/// Recall of gold columns in the link and the share of columns pruned.
pub fn linking_quality<S: Scalar>(
    linked: &LinkedSchema,
    gold_columns: &[(String, String)],
    full: &DatabaseSchema,
) -> Result<LinkingQuality<S>> {
    let gold: BTreeSet<(String, String)> = gold_columns
        .iter()
        .map(|(t, c)| (t.to_ascii_lowercase(), c.to_ascii_lowercase()))
        .collect();
    if gold.is_empty() {
        return Err(MetricError::Undefined("linking recall"));
    }
    let full_cols = full.column_count();
    if full_cols == 0 {
        return Err(MetricError::Undefined("column reduction"));
    }
    let hit = gold.iter().filter(|(t, c)| linked.contains(t, c)).count() as u64;
    let recall = S::from_count(hit) / S::from_count(gold.len() as u64);
    let column_reduction =
        S::one() - S::from_count(linked.column_count() as u64) / S::from_count(full_cols as u64);
    Ok(LinkingQuality {
        recall,
        column_reduction,
    })
}

/// Approximates the columns a gold query touches: identifiers in the SQL are
/// matched against table names, then against the columns of the referenced
/// tables. Quoted identifiers (`"x"`, `` `x` ``, `[x]`) are unwrapped;
/// single-quoted string literals are skipped.
pub fn extract_gold_columns(sql: &str, schema: &DatabaseSchema) -> Vec<(String, String)> {
    let idents = sql_identifiers(sql);
    let lowered: BTreeSet<String> = idents.iter().map(|s| s.to_ascii_lowercase()).collect();
    let tables: Vec<_> = schema
        .tables()
        .iter()
        .filter(|t| lowered.contains(&t.name.to_ascii_lowercase()))
        .collect();
    let mut out = Vec::new();
    for table in tables {
        for col in &table.columns {
            if lowered.contains(&col.name.to_ascii_lowercase()) {
                out.push((table.name.clone(), col.name.clone()));
            }
        }
    }
    out
}

fn sql_identifiers(sql: &str) -> Vec<String> {
    let chars: Vec<char> = sql.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let close = match c {
            '"' => Some('"'),
            '`' => Some('`'),
            '[' => Some(']'),
            _ => None,
        };
        if let Some(close) = close {
            let start = i + 1;
            let mut j = start;
            while j < chars.len() && chars[j] != close {
                j += 1;
            }
            out.push(chars[start..j.min(chars.len())].iter().collect());
            i = j + 1;
        } else if c == '\'' {
            i += 1;
            while i < chars.len() {
                if chars[i] == '\'' {
                    if chars.get(i + 1) == Some(&'\'') {
                        i += 2;
                        continue;
                    }
                    break;
                }
                i += 1;
            }
            i += 1;
        } else if c.is_alphanumeric() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push(chars[start..i].iter().collect());
        } else {
            i += 1;
        }
    }
    out
}

/// Kendall's tau-b between two paired samples.
pub fn kendall_tau<S: Scalar>(xs: &[S], ys: &[S]) -> Result<S> {
    if xs.len() != ys.len() {
        return Err(MetricError::LengthMismatch {
            left: xs.len(),
            right: ys.len(),
        });
    }
    if xs.len() < 2 {
        return Err(MetricError::Undefined("Kendall's tau"));
    }
    let (mut concordant, mut discordant, mut tie_x, mut tie_y) = (0i64, 0i64, 0i64, 0i64);
    for i in 0..xs.len() {
        for j in (i + 1)..xs.len() {
            let dx = xs[i] - xs[j];
            let dy = ys[i] - ys[j];
            let zx = dx == S::zero();
            let zy = dy == S::zero();
            if zx && zy {
                continue;
            } else if zx {
                tie_x += 1;
            } else if zy {
                tie_y += 1;
            } else if (dx > S::zero()) == (dy > S::zero()) {
                concordant += 1;
            } else {
                discordant += 1;
            }
        }
    }
    let n0 = (concordant + discordant + tie_x) as f64;
    let n1 = (concordant + discordant + tie_y) as f64;
    let denom = (n0 * n1).sqrt();
    if denom == 0.0 {
        return Err(MetricError::Undefined("Kendall's tau"));
    }
    Ok(S::from_f64_lossy((concordant - discordant) as f64 / denom))
}
