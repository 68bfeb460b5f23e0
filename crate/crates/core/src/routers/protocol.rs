//! Wire format of the router scoring service (`POST /score`).
//!
//! Request:
//! `{"mode": "multiclass"|"binary"|"preference", "tier": "<binary only>",
//!   "question": str, "hint": str, "n_tables": int, "n_columns": int,
//!   "linked_schema": [{"table": str, "columns": [str]}]}`
//!
//! Response: `{"scores": {"Basic": x, "Intermediate": y, "Advanced": z}}`
//! for multiclass/preference, `{"verdict": 0|1, "score": x}` for binary.
//! Unknown fields are ignored; missing required fields are errors.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::model::{LinkedTable, RouterInput, Tier};

use super::{build_features, RouteError, ScoreMap};

pub const SCORE_PATH: &str = "/score";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreMode {
    Multiclass,
    Binary,
    Preference,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRequest {
    pub mode: ScoreMode,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tier: Option<Tier>,
    pub question: String,
    pub hint: String,
    pub n_tables: u32,
    pub n_columns: u32,
    pub linked_schema: Vec<LinkedTable>,
}

impl ScoreRequest {
    /// Builds a request; `tier` must be given exactly when `mode` is binary.
    pub fn new(mode: ScoreMode, tier: Option<Tier>, input: &RouterInput<'_>) -> Result<Self, RouteError> {
        if (mode == ScoreMode::Binary) != tier.is_some() {
            return Err(RouteError::Protocol("`tier` is required iff mode is binary".into()));
        }
        let f = build_features(input.linked);
        Ok(Self {
            mode,
            tier,
            question: input.question.to_string(),
            hint: input.hint.to_string(),
            n_tables: f.n_tables,
            n_columns: f.n_columns,
            linked_schema: input.linked.entries.clone(),
        })
    }

    /// Server-side validation of an incoming body.
    pub fn parse(body: &Value) -> Result<Self, RouteError> {
        let obj = body
            .as_object()
            .ok_or_else(|| RouteError::Protocol("request body must be a JSON object".into()))?;
        let mode: ScoreMode = field(obj, "mode")?;
        let tier = match obj.get("tier") {
            None | Some(Value::Null) => None,
            Some(v) => Some(decode::<Tier>(v, "tier")?),
        };
        if mode == ScoreMode::Binary && tier.is_none() {
            return Err(RouteError::Protocol("binary mode requires `tier`".into()));
        }
        if tier == Some(Tier::Advanced) {
            return Err(RouteError::Protocol("no binary classifier exists for Advanced".into()));
        }
        Ok(Self {
            mode,
            tier: if mode == ScoreMode::Binary { tier } else { None },
            question: field(obj, "question")?,
            hint: field(obj, "hint")?,
            n_tables: field(obj, "n_tables")?,
            n_columns: field(obj, "n_columns")?,
            linked_schema: field(obj, "linked_schema")?,
        })
    }
}

/// Decoded response body.
#[derive(Debug, Clone, PartialEq)]
pub enum ScoreResponse {
    Scores(ScoreMap<f64>),
    Verdict { verdict: bool, score: f64 },
}

impl ScoreResponse {
    pub fn parse(mode: ScoreMode, body: &Value) -> Result<Self, RouteError> {
        let obj = body
            .as_object()
            .ok_or_else(|| RouteError::Protocol("response body must be a JSON object".into()))?;
        match mode {
            ScoreMode::Multiclass | ScoreMode::Preference => {
                let scores = obj
                    .get("scores")
                    .and_then(Value::as_object)
                    .ok_or_else(|| RouteError::Protocol("missing `scores` object".into()))?;
                let mut out = [0.0; 3];
                for tier in Tier::ALL {
                    out[tier.index()] = scores
                        .get(tier.name())
                        .and_then(Value::as_f64)
                        .ok_or_else(|| RouteError::Protocol(format!("missing score for {tier}")))?;
                }
                Ok(Self::Scores(ScoreMap::from_array(out)?))
            }
            ScoreMode::Binary => {
                let verdict = match obj.get("verdict").and_then(Value::as_u64) {
                    Some(0) => false,
                    Some(1) => true,
                    _ => return Err(RouteError::Protocol("`verdict` must be 0 or 1".into())),
                };
                let score = obj
                    .get("score")
                    .and_then(Value::as_f64)
                    .ok_or_else(|| RouteError::Protocol("missing `score`".into()))?;
                Ok(Self::Verdict { verdict, score })
            }
        }
    }

    pub fn to_json(&self) -> Value {
        match self {
            Self::Scores(s) => serde_json::json!({
                "scores": {
                    "Basic": s.get(Tier::Basic),
                    "Intermediate": s.get(Tier::Intermediate),
                    "Advanced": s.get(Tier::Advanced),
                }
            }),
            Self::Verdict { verdict, score } => serde_json::json!({
                "verdict": u8::from(*verdict),
                "score": score,
            }),
        }
    }
}

fn field<T: serde::de::DeserializeOwned>(obj: &serde_json::Map<String, Value>, name: &str) -> Result<T, RouteError> {
    let v = obj
        .get(name)
        .ok_or_else(|| RouteError::Protocol(format!("missing field `{name}`")))?;
    decode(v, name)
}

fn decode<T: serde::de::DeserializeOwned>(v: &Value, name: &str) -> Result<T, RouteError> {
    serde_json::from_value(v.clone()).map_err(|e| RouteError::Protocol(format!("field `{name}`: {e}")))
}
