//! Network side of the gateway.

use std::time::Duration;

use serde_json::{json, Value};

use crate::request::{ChatRequest, ChatResponse, Usage};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ProviderError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("malformed provider payload: {0}")]
    Decode(String),
}

impl ProviderError {
    /// Transport failures, 429 and 5xx are worth another attempt.
    pub fn retryable(&self) -> bool {
        match self {
            Self::Transport(_) => true,
            Self::Status { status, .. } => *status == 429 || (500..600).contains(status),
            Self::Decode(_) => false,
        }
    }
}

pub trait Provider: Send + Sync {
    fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, ProviderError>;
}

impl<F> Provider for F
where
    F: Fn(&ChatRequest) -> Result<ChatResponse, ProviderError> + Send + Sync,
{
    fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, ProviderError> {
        self(req)
    }
}

/// OpenAI-style `POST {base_url}/chat/completions` client.
pub struct HttpProvider {
    client: reqwest::blocking::Client,
    endpoint: String,
    api_key: Option<String>,
}

impl HttpProvider {
    pub fn new(base_url: &str, api_key: Option<String>, timeout: Duration) -> Result<Self, ProviderError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| ProviderError::Transport(e.to_string()))?;
        Ok(Self {
            client,
            endpoint: format!("{}/chat/completions", base_url.trim_end_matches('/')),
            api_key,
        })
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }
}

pub fn request_body(req: &ChatRequest) -> Value {
    let mut body = json!({
        "model": req.model,
        "messages": [{"role": "user", "content": req.prompt}],
        "temperature": req.temperature,
    });
    if let Some(n) = req.max_tokens {
        body["max_tokens"] = json!(n);
    }
    body
}

/// Extracts the completion text and usage from a chat-completions payload,
/// estimating usage when the provider left it out.
pub fn parse_response_body(req: &ChatRequest, body: &Value) -> Result<ChatResponse, ProviderError> {
    let text = body
        .pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .ok_or_else(|| ProviderError::Decode("missing choices[0].message.content".into()))?
        .to_string();
    let reported = body.get("usage").and_then(|u| {
        Some(Usage {
            prompt_tokens: u.get("prompt_tokens")?.as_u64()?,
            completion_tokens: u.get("completion_tokens")?.as_u64()?,
            estimated: false,
        })
    });
    let usage = reported.unwrap_or_else(|| Usage::estimate(&req.prompt, &text));
    Ok(ChatResponse { text, usage })
}

impl Provider for HttpProvider {
    fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, ProviderError> {
        let mut call = self.client.post(&self.endpoint).json(&request_body(req));
        if let Some(key) = &self.api_key {
            call = call.bearer_auth(key);
        }
        let resp = call.send().map_err(|e| ProviderError::Transport(e.to_string()))?;
        let status = resp.status();
        let text = resp.text().map_err(|e| ProviderError::Transport(e.to_string()))?;
        if !status.is_success() {
            return Err(ProviderError::Status {
                status: status.as_u16(),
                body: text.chars().take(500).collect(),
            });
        }
        let body: Value = serde_json::from_str(&text).map_err(|e| ProviderError::Decode(e.to_string()))?;
        parse_response_body(req, &body)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn body_shape() {
        let b = request_body(&ChatRequest::new("gpt", "hi").with_max_tokens(5));
        assert_eq!(b["messages"][0]["role"], "user");
        assert_eq!(b["messages"][0]["content"], "hi");
        assert_eq!(b["max_tokens"], 5);
        assert!(request_body(&ChatRequest::new("gpt", "hi")).get("max_tokens").is_none());
    }

    #[test]
    fn parse_with_and_without_usage() {
        let req = ChatRequest::new("m", "12345678");
        let with = json!({"choices":[{"message":{"content":"abc"}}],"usage":{"prompt_tokens":7,"completion_tokens":2}});
        let r = parse_response_body(&req, &with).unwrap();
        assert_eq!(r.usage, Usage { prompt_tokens: 7, completion_tokens: 2, estimated: false });

        let without = json!({"choices":[{"message":{"content":"abcde"}}]});
        let r = parse_response_body(&req, &without).unwrap();
        assert_eq!(r.usage, Usage { prompt_tokens: 2, completion_tokens: 2, estimated: true });

        assert!(matches!(parse_response_body(&req, &json!({"choices":[]})), Err(ProviderError::Decode(_))));
    }

    #[test]
    fn retry_classification() {
        assert!(ProviderError::Transport("x".into()).retryable());
        assert!(ProviderError::Status { status: 429, body: String::new() }.retryable());
        assert!(ProviderError::Status { status: 503, body: String::new() }.retryable());
        assert!(!ProviderError::Status { status: 400, body: String::new() }.retryable());
        assert!(!ProviderError::Decode("x".into()).retryable());
    }
}
