//! Schema linking: ask the model which tables and columns a question needs.

use serde::{Deserialize, Serialize};
use tiersql_core::{DatabaseSchema, LinkedSchema, NLQuery, Phase, TokenUsage};
use tiersql_gateway::{canonical_key, ChatRequest, Gateway};

use crate::parse::parse_link_json;
use crate::prompts::{render_schema, RenderOptions, SCHEMA_LINKING};
use crate::{to_usage, EngineError, LlmSettings};

const RETRY_SUFFIX: &str = "\n\nReturn only the JSON object, wrapped in a code block using ```json```.";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LinkerConfig {
    #[serde(flatten)]
    pub llm: LlmSettings,
    /// Issue one more request when the first answer has no usable JSON.
    pub retry_on_malformed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinkOutput {
    pub linked: LinkedSchema,
    pub usage: TokenUsage,
    pub digests: Vec<String>,
}

pub fn build_link_prompt(schema: &DatabaseSchema, q: &NLQuery) -> String {
    let schema_str = render_schema(schema, &RenderOptions::default());
    SCHEMA_LINKING.render(&[("schema_str", &schema_str), ("query", &q.question), ("evidence", &q.hint)])
}

/// Never fails: anything unusable degrades to the full schema.
pub fn parse_link_response(resp: &str, schema: &DatabaseSchema) -> LinkedSchema {
    try_parse(resp, schema).unwrap_or_else(|| LinkedSchema::fallback_full(schema))
}

fn try_parse(resp: &str, schema: &DatabaseSchema) -> Option<LinkedSchema> {
    let selection = parse_link_json(resp)?;
    LinkedSchema::resolve(
        schema,
        selection.iter().map(|(t, cols)| (t.as_str(), cols.iter().map(String::as_str))),
    )
    .ok()
}

pub fn link(q: &NLQuery, schema: &DatabaseSchema, gw: &Gateway, cfg: &LinkerConfig) -> Result<LinkOutput, EngineError> {
    if schema.is_empty() {
        return Err(EngineError::Config(format!("database {} has no tables", q.db_id)));
    }
    let prompt = build_link_prompt(schema, q);
    let req = cfg.llm.request(prompt.clone());
    let resp = gw.complete(&req)?;
    let mut usage = to_usage(Phase::Linking, &resp.usage);
    let mut digests = vec![canonical_key(&req)];

    let mut parsed = try_parse(&resp.text, schema);
    if parsed.is_none() && cfg.retry_on_malformed {
        let retry: ChatRequest = cfg.llm.request(prompt + RETRY_SUFFIX);
        let again = gw.complete(&retry)?;
        usage = usage.merge(to_usage(Phase::Linking, &again.usage))?;
        digests.push(canonical_key(&retry));
        parsed = try_parse(&again.text, schema);
    }
    let linked = parsed.unwrap_or_else(|| {
        log::debug!("query {}: link response unusable, using full schema", q.id);
        LinkedSchema::fallback_full(schema)
    });
    Ok(LinkOutput { linked, usage, digests })
}
