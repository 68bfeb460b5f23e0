//! Waterfall construction of router training data.
//!
//! Each query is attempted with the cheapest tier first and escalated only
//! on failure; the first tier whose SQL matches the gold result becomes the
//! label. Preference pairs rank the label above every other tier.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{LinkedSchema, NLQuery, Phase, Tier, TokenUsage};
use crate::routers::{build_features, FeatureVector, LabeledPoint};

#[derive(Debug, Error)]
pub enum LabelError {
    #[error("query `{0}` has no gold SQL")]
    MissingGold(String),
    #[error("training set I/O: {0}")]
    Io(#[from] io::Error),
    #[error("training set line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// Result of running one tier on one query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TierOutcome {
    pub sql: String,
    pub correct: bool,
    pub usage: TokenUsage,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl TierOutcome {
    pub fn failed(error: impl Into<String>) -> Self {
        Self {
            sql: String::new(),
            correct: false,
            usage: TokenUsage::zero(Phase::Generation),
            error: Some(error.into()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PreferencePair {
    pub preferred: Tier,
    pub rejected: Tier,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledExample {
    pub query_id: String,
    pub label: Tier,
    /// False when no tier produced a matching result; such queries carry
    /// the Advanced label.
    pub solved: bool,
    pub outcomes: BTreeMap<Tier, TierOutcome>,
    pub features: FeatureVector,
    pub question: String,
    pub hint: String,
    pub linked_schema: LinkedSchema,
}

impl LabeledExample {
    pub fn point(&self) -> LabeledPoint {
        LabeledPoint {
            features: self.features,
            label: self.label,
        }
    }

    /// Generation usage summed over every attempted tier.
    pub fn labeling_usage(&self) -> TokenUsage {
        self.outcomes
            .values()
            .fold(TokenUsage::zero(Phase::Generation), |acc, o| {
                acc.merge(o.usage).unwrap_or(acc)
            })
    }
}

/// Attempts tiers cheapest first until one is correct.
///
/// `attempt` runs a tier and reports whether its SQL matched the gold
/// result. An `Err` from `attempt` is recorded as a failed outcome and the
/// cascade moves on.
pub fn waterfall_label<F>(q: &NLQuery, linked: &LinkedSchema, mut attempt: F) -> Result<LabeledExample, LabelError>
where
    F: FnMut(Tier) -> Result<TierOutcome, String>,
{
    if q.gold_sql.is_none() {
        return Err(LabelError::MissingGold(q.id.clone()));
    }
    let mut outcomes = BTreeMap::new();
    let mut label = Tier::Advanced;
    let mut solved = false;
    for tier in Tier::ALL {
        let outcome = attempt(tier).unwrap_or_else(TierOutcome::failed);
        let correct = outcome.correct;
        outcomes.insert(tier, outcome);
        if correct {
            label = tier;
            solved = true;
            break;
        }
    }
    Ok(LabeledExample {
        query_id: q.id.clone(),
        label,
        solved,
        outcomes,
        features: build_features(linked),
        question: q.question.clone(),
        hint: q.hint.clone(),
        linked_schema: linked.clone(),
    })
}

/// The label beats every other tier.
pub fn derive_preference_pairs(label: Tier) -> Vec<PreferencePair> {
    Tier::ALL
        .into_iter()
        .filter(|t| *t != label)
        .map(|rejected| PreferencePair {
            preferred: label,
            rejected,
        })
        .collect()
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ExportOptions {
    /// Emit preference pairs for queries no tier solved.
    pub include_unsolved_pairs: bool,
}

/// One line of the training-set JSONL.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingRecord {
    pub query_id: String,
    pub label: Tier,
    pub solved: bool,
    pub features: FeatureVector,
    pub question: String,
    pub hint: String,
    pub linked_schema: LinkedSchema,
    pub preference_pairs: Vec<PreferencePair>,
    pub outcomes: BTreeMap<Tier, TierOutcome>,
}

impl TrainingRecord {
    pub fn from_example(ex: &LabeledExample, opts: ExportOptions) -> Self {
        let preference_pairs = if ex.solved || opts.include_unsolved_pairs {
            derive_preference_pairs(ex.label)
        } else {
            Vec::new()
        };
        Self {
            query_id: ex.query_id.clone(),
            label: ex.label,
            solved: ex.solved,
            features: ex.features,
            question: ex.question.clone(),
            hint: ex.hint.clone(),
            linked_schema: ex.linked_schema.clone(),
            preference_pairs,
            outcomes: ex.outcomes.clone(),
        }
    }

    pub fn into_example(self) -> LabeledExample {
        LabeledExample {
            query_id: self.query_id,
            label: self.label,
            solved: self.solved,
            outcomes: self.outcomes,
            features: self.features,
            question: self.question,
            hint: self.hint,
            linked_schema: self.linked_schema,
        }
    }
}

pub fn write_training_set<W: Write>(examples: &[LabeledExample], opts: ExportOptions, mut out: W) -> io::Result<()> {
    for ex in examples {
        let line = serde_json::to_string(&TrainingRecord::from_example(ex, opts))?;
        out.write_all(line.as_bytes())?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

pub fn export_training_set(examples: &[LabeledExample], path: &Path, opts: ExportOptions) -> Result<(), LabelError> {
    let file = File::create(path)?;
    write_training_set(examples, opts, BufWriter::new(file))?;
    Ok(())
}

pub fn read_training_set<R: BufRead>(input: R) -> Result<Vec<TrainingRecord>, LabelError> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| LabelError::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}

pub fn import_training_set(path: &Path) -> Result<Vec<LabeledExample>, LabelError> {
    let records = read_training_set(BufReader::new(File::open(path)?))?;
    Ok(records.into_iter().map(TrainingRecord::into_example).collect())
}

/// Label counts in cost order.
pub fn label_distribution(examples: &[LabeledExample]) -> [usize; 3] {
    let mut counts = [0; 3];
    for ex in examples {
        counts[ex.label.index()] += 1;
    }
    counts
}
