//! Schema linking, the three SQL generation tiers and the remote scorer
//! client, all driven through a [`tiersql_gateway::Gateway`].

pub mod linker;
pub mod parse;
pub mod pipelines;
pub mod prompts;
pub mod scorer;

use serde::{Deserialize, Serialize};
use tiersql_core::{ModelError, Phase, TokenUsage};
use tiersql_gateway::{ChatRequest, GatewayError, Usage};
use tiersql_sqlexec::ExecError;

pub use linker::{build_link_prompt, link, parse_link_response, LinkOutput, LinkerConfig};
pub use parse::{extract_sql, ExtractedSql, SubQuestion, SynthesizedExample};
pub use pipelines::{GenContext, GenerationResult, PipelineConfig, Pipelines, StepRecord, SynthesisScope};
pub use scorer::{RemoteClassifier, RemoteScorer, ScorerClient};

#[derive(Debug, thiserror::Error)]
pub enum EngineError {
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("no SQL in the {step} completion")]
    EmptySql { step: String },
    #[error(transparent)]
    Exec(#[from] ExecError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("configuration: {0}")]
    Config(String),
}

/// Model call parameters shared by the linker and the pipelines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LlmSettings {
    pub model: String,
    pub temperature: f64,
    pub max_tokens: Option<u32>,
}

impl Default for LlmSettings {
    fn default() -> Self {
        Self {
            model: "gpt-4o-mini".into(),
            temperature: 0.0,
            max_tokens: None,
        }
    }
}

impl LlmSettings {
    pub fn request(&self, prompt: String) -> ChatRequest {
        ChatRequest {
            model: self.model.clone(),
            prompt,
            temperature: self.temperature,
            max_tokens: self.max_tokens,
        }
    }
}

pub fn to_usage(phase: Phase, u: &Usage) -> TokenUsage {
    TokenUsage::new(phase, u.prompt_tokens, u.completion_tokens).with_estimated(u.estimated)
}
