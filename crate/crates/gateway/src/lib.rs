//! Chat-completion gateway with a content-addressed record/replay cache.
//!
//! Every request is keyed by [`canonical_key`]. Depending on the
//! [`GatewayMode`] the gateway either calls the provider, serves from the
//! cache, or both. Tests and the shipped fixture run in `replay_strict`
//! and never touch the network.

mod cache;
mod provider;
mod request;

use std::path::PathBuf;
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};

pub use cache::{CacheEntry, GcReport, ResponseCache};
pub use provider::{parse_response_body, request_body, HttpProvider, Provider, ProviderError};
pub use request::{canonical_key, estimate_tokens, ChatRequest, ChatResponse, Usage};

#[derive(Debug, thiserror::Error)]
pub enum GatewayError {
    #[error("replay_strict cache miss for digest {digest}")]
    StrictMiss { digest: String },
    #[error("provider error after {attempts} attempt(s): {source}")]
    Provider { attempts: u32, source: ProviderError },
    #[error("cache error at {path}: {message}")]
    Cache { path: PathBuf, message: String },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("gateway configuration: {0}")]
    Config(String),
}

impl GatewayError {
    pub fn is_decode(&self) -> bool {
        matches!(self, Self::Provider { source: ProviderError::Decode(_), .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GatewayMode {
    /// Always call the provider; the cache is neither read nor written.
    Passthrough,
    /// Serve hits from the cache, call and persist on a miss.
    Record,
    /// Cache only; a miss is an error.
    ReplayStrict,
    /// Serve hits from the cache, call and persist on a miss.
    ReplayFallback,
}

impl GatewayMode {
    pub fn name(self) -> &'static str {
        match self {
            Self::Passthrough => "passthrough",
            Self::Record => "record",
            Self::ReplayStrict => "replay_strict",
            Self::ReplayFallback => "replay_fallback",
        }
    }

    pub fn needs_provider(self) -> bool {
        self != Self::ReplayStrict
    }
}

impl std::fmt::Display for GatewayMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for GatewayMode {
    type Err = GatewayError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "passthrough" => Ok(Self::Passthrough),
            "record" => Ok(Self::Record),
            "replay_strict" | "replay" => Ok(Self::ReplayStrict),
            "replay_fallback" => Ok(Self::ReplayFallback),
            other => Err(GatewayError::Config(format!("unknown gateway mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub attempts: u32,
    pub initial_backoff_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            attempts: 3,
            initial_backoff_ms: 1000,
        }
    }
}

impl RetryPolicy {
    /// Delay before retry number `n` (1-based): initial, 2×initial, 4×...
    pub fn backoff(&self, n: u32) -> Duration {
        Duration::from_millis(self.initial_backoff_ms.saturating_mul(1u64 << (n - 1).min(16)))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct GatewayStats {
    pub network_calls: u64,
    pub cache_hits: u64,
}

/// Counting semaphore bounding in-flight provider calls.
struct Limiter {
    max: usize,
    in_flight: Mutex<usize>,
    cv: Condvar,
}

struct Permit<'a>(&'a Limiter);

impl Limiter {
    fn new(max: usize) -> Self {
        Self {
            max: max.max(1),
            in_flight: Mutex::new(0),
            cv: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut n = self.in_flight.lock().unwrap_or_else(|e| e.into_inner());
        while *n >= self.max {
            n = self.cv.wait(n).unwrap_or_else(|e| e.into_inner());
        }
        *n += 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut n = self.0.in_flight.lock().unwrap_or_else(|e| e.into_inner());
        *n -= 1;
        self.0.cv.notify_one();
    }
}

pub struct Gateway {
    mode: GatewayMode,
    cache: Option<ResponseCache>,
    provider: Option<Box<dyn Provider>>,
    retry: RetryPolicy,
    limiter: Limiter,
    network_calls: AtomicU64,
    cache_hits: AtomicU64,
}

impl std::fmt::Debug for Gateway {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Gateway")
            .field("mode", &self.mode)
            .field("cache", &self.cache.as_ref().map(|c| c.dir()))
            .field("has_provider", &self.provider.is_some())
            .field("max_concurrency", &self.limiter.max)
            .finish()
    }
}

impl Gateway {
    /// `cache_dir` is required for every mode except passthrough; a
    /// provider is required for every mode except replay_strict.
    pub fn new(
        mode: GatewayMode,
        cache_dir: Option<PathBuf>,
        provider: Option<Box<dyn Provider>>,
        max_concurrency: usize,
    ) -> Result<Self, GatewayError> {
        if mode.needs_provider() && provider.is_none() {
            return Err(GatewayError::Config(format!("mode {mode} needs a provider")));
        }
        let cache = match (mode, cache_dir) {
            (GatewayMode::Passthrough, _) => None,
            (_, Some(dir)) => Some(ResponseCache::open(dir)?),
            (_, None) => return Err(GatewayError::Config(format!("mode {mode} needs a cache directory"))),
        };
        Ok(Self {
            mode,
            cache,
            provider,
            retry: RetryPolicy::default(),
            limiter: Limiter::new(max_concurrency),
            network_calls: AtomicU64::new(0),
            cache_hits: AtomicU64::new(0),
        })
    }

    /// Cache-only gateway.
    pub fn replay(cache_dir: impl Into<PathBuf>) -> Result<Self, GatewayError> {
        Self::new(GatewayMode::ReplayStrict, Some(cache_dir.into()), None, 1)
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn mode(&self) -> GatewayMode {
        self.mode
    }

    pub fn cache(&self) -> Option<&ResponseCache> {
        self.cache.as_ref()
    }

    pub fn stats(&self) -> GatewayStats {
        GatewayStats {
            network_calls: self.network_calls.load(Ordering::Relaxed),
            cache_hits: self.cache_hits.load(Ordering::Relaxed),
        }
    }

    pub fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        req.validate()?;
        let key = canonical_key(req);
        if let (Some(cache), true) = (&self.cache, self.mode != GatewayMode::Passthrough) {
            if let Some(entry) = cache.get(&key)? {
                self.cache_hits.fetch_add(1, Ordering::Relaxed);
                return Ok(entry.response);
            }
            if self.mode == GatewayMode::ReplayStrict {
                return Err(GatewayError::StrictMiss { digest: key });
            }
        }
        let resp = self.call_provider(req)?;
        if let Some(cache) = &self.cache {
            cache.put(req, &resp)?;
        }
        Ok(resp)
    }

    fn call_provider(&self, req: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        let provider = self
            .provider
            .as_ref()
            .ok_or_else(|| GatewayError::Config("no provider configured".into()))?;
        let attempts = self.retry.attempts.max(1);
        let mut attempt = 0;
        loop {
            attempt += 1;
            let result = {
                let _permit = self.limiter.acquire();
                self.network_calls.fetch_add(1, Ordering::Relaxed);
                provider.complete(req)
            };
            match result {
                Ok(r) => return Ok(r),
                Err(e) if e.retryable() && attempt < attempts => {
                    let wait = self.retry.backoff(attempt);
                    log::warn!("provider attempt {attempt}/{attempts} failed ({e}); retrying in {wait:?}");
                    std::thread::sleep(wait);
                }
                Err(source) => return Err(GatewayError::Provider { attempts: attempt, source }),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mode_parsing() {
        for m in [
            GatewayMode::Passthrough,
            GatewayMode::Record,
            GatewayMode::ReplayStrict,
            GatewayMode::ReplayFallback,
        ] {
            assert_eq!(m.name().parse::<GatewayMode>().unwrap(), m);
            assert_eq!(serde_json::to_string(&m).unwrap(), format!("\"{}\"", m.name()));
        }
        assert!("live".parse::<GatewayMode>().is_err());
    }

    #[test]
    fn backoff_doubles() {
        let p = RetryPolicy::default();
        assert_eq!(p.backoff(1), Duration::from_secs(1));
        assert_eq!(p.backoff(2), Duration::from_secs(2));
        assert_eq!(p.backoff(3), Duration::from_secs(4));
    }

    #[test]
    fn construction_checks() {
        assert!(Gateway::new(GatewayMode::Record, None, None, 1).is_err());
        let stub: Box<dyn Provider> = Box::new(|_: &ChatRequest| Err(ProviderError::Transport("x".into())));
        assert!(Gateway::new(GatewayMode::Record, None, Some(stub), 1).is_err());
    }
}
