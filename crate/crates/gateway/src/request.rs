use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::GatewayError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    /// Sent as a single user message.
    pub prompt: String,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_tokens: Option<u32>,
}

impl ChatRequest {
    pub fn new(model: impl Into<String>, prompt: impl Into<String>) -> Self {
        Self {
            model: model.into(),
            prompt: prompt.into(),
            temperature: 0.0,
            max_tokens: None,
        }
    }

    pub fn with_temperature(mut self, t: f64) -> Self {
        self.temperature = t;
        self
    }

    pub fn with_max_tokens(mut self, n: u32) -> Self {
        self.max_tokens = Some(n);
        self
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.prompt.is_empty() {
            return Err(GatewayError::InvalidRequest("prompt is empty".into()));
        }
        if !self.temperature.is_finite() || self.temperature < 0.0 {
            return Err(GatewayError::InvalidRequest(format!("temperature {} is not a finite value >= 0", self.temperature)));
        }
        if self.max_tokens == Some(0) {
            return Err(GatewayError::InvalidRequest("max_tokens must be positive".into()));
        }
        Ok(())
    }

    /// Bytes hashed by [`canonical_key`].
    pub fn canonical_bytes(&self) -> Vec<u8> {
        let max = self.max_tokens.map_or_else(|| "none".to_string(), |n| n.to_string());
        let temp = format!("{:.4}", self.temperature);
        [self.model.as_str(), self.prompt.as_str(), temp.as_str(), max.as_str()]
            .join("\u{1f}")
            .into_bytes()
    }
}

/// Lowercase hex SHA-256 of the request's canonical serialization.
pub fn canonical_key(req: &ChatRequest) -> String {
    hex::encode(Sha256::digest(req.canonical_bytes()))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    /// Set when the provider did not report counts and they were estimated.
    #[serde(default)]
    pub estimated: bool,
}

impl Usage {
    pub fn estimate(prompt: &str, completion: &str) -> Self {
        Self {
            prompt_tokens: estimate_tokens(prompt),
            completion_tokens: estimate_tokens(completion),
            estimated: true,
        }
    }
}

/// Character count divided by four, rounded up.
pub fn estimate_tokens(text: &str) -> u64 {
    (text.chars().count() as u64).div_ceil(4)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub text: String,
    pub usage: Usage,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_bytes_layout() {
        let r = ChatRequest::new("m", "hi");
        assert_eq!(r.canonical_bytes(), b"m\x1fhi\x1f0.0000\x1fnone");
        let r = ChatRequest::new("m", "hi").with_temperature(0.5).with_max_tokens(64);
        assert_eq!(r.canonical_bytes(), b"m\x1fhi\x1f0.5000\x1f64");
    }

    #[test]
    fn key_shape_and_sensitivity() {
        let a = canonical_key(&ChatRequest::new("m", "hi"));
        assert_eq!(a.len(), 64);
        assert!(a.chars().all(|c| c.is_ascii_hexdigit() && !c.is_ascii_uppercase()));
        assert_eq!(a, canonical_key(&ChatRequest::new("m", "hi")));
        assert_ne!(a, canonical_key(&ChatRequest::new("m", "hi").with_temperature(0.5)));
        assert_ne!(a, canonical_key(&ChatRequest::new("m", "hi").with_max_tokens(10)));
    }

    #[test]
    fn estimate_rounds_up() {
        assert_eq!(estimate_tokens(""), 0);
        assert_eq!(estimate_tokens("abcd"), 1);
        assert_eq!(estimate_tokens("abcde"), 2);
        assert_eq!(estimate_tokens("ééé"), 1);
    }

    #[test]
    fn validation() {
        assert!(ChatRequest::new("m", "").validate().is_err());
        assert!(ChatRequest::new("m", "x").with_temperature(-0.1).validate().is_err());
        assert!(ChatRequest::new("m", "x").with_temperature(f64::NAN).validate().is_err());
        assert!(ChatRequest::new("m", "x").with_max_tokens(0).validate().is_err());
        assert!(ChatRequest::new("m", "x").validate().is_ok());
    }
}
