//! The single JSON configuration document.
//!
//! Relative paths are resolved against the directory holding the config
//! file. Provider credentials are never read from the file: the gateway
//! section names an environment variable instead.

use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use tiersql_core::routers::protocol::ScoreMode;
use tiersql_core::{Phase, Tier};
use tiersql_engine::{LinkerConfig, PipelineConfig};
use tiersql_gateway::{Gateway, GatewayMode, HttpProvider, RetryPolicy};

use crate::dataset::DatasetSpec;
use crate::HarnessError;

pub const DEFAULT_API_KEY_ENV: &str = "OPENAI_API_KEY";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GatewayConfig {
    pub mode: GatewayMode,
    pub cache_dir: Option<PathBuf>,
    pub base_url: String,
    /// Name of the environment variable holding the API key.
    pub api_key_env: String,
    pub timeout_ms: u64,
    pub max_concurrency: usize,
    pub retry: RetryPolicy,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        Self {
            mode: GatewayMode::ReplayStrict,
            cache_dir: None,
            base_url: "https://api.openai.com/v1".into(),
            api_key_env: DEFAULT_API_KEY_ENV.into(),
            timeout_ms: 120_000,
            max_concurrency: 8,
            retry: RetryPolicy::default(),
        }
    }
}

impl GatewayConfig {
    pub fn build(&self) -> Result<Gateway, HarnessError> {
        let provider = if self.mode.needs_provider() {
            let key = std::env::var(&self.api_key_env).ok().filter(|k| !k.is_empty());
            if key.is_none() {
                log::warn!("{} is not set; provider calls go out unauthenticated", self.api_key_env);
            }
            let p = HttpProvider::new(&self.base_url, key, Duration::from_millis(self.timeout_ms))
                .map_err(|e| HarnessError::Config(e.to_string()))?;
            Some(Box::new(p) as Box<dyn tiersql_gateway::Provider>)
        } else {
            None
        };
        Ok(Gateway::new(self.mode, self.cache_dir.clone(), provider, self.max_concurrency)?.with_retry(self.retry))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RouterConfig {
    /// Always the same tier.
    Fixed { tier: Tier },
    /// Stored labels from a training-set JSONL.
    Oracle { labels: PathBuf },
    Knn {
        train: PathBuf,
        #[serde(default = "default_knn_k")]
        k: usize,
    },
    /// Argmax over scores from the scoring service.
    Score {
        url: String,
        #[serde(default = "default_score_mode")]
        mode: ScoreMode,
    },
    /// Binary classifiers served by the scoring service, cheapest first.
    Cascade { url: String },
}

fn default_knn_k() -> usize {
    tiersql_core::routers::DEFAULT_K
}

fn default_score_mode() -> ScoreMode {
    ScoreMode::Multiclass
}

impl Default for RouterConfig {
    fn default() -> Self {
        RouterConfig::Fixed { tier: Tier::Basic }
    }
}

/// Caps on how much work a command may start.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Budget {
    pub max_queries: Option<usize>,
    /// Spend estimate in weighted tokens (prompt + mu * completion).
    pub max_weighted_tokens: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub dataset: DatasetSpec,
    pub gateway: GatewayConfig,
    pub linker: LinkerConfig,
    pub pipelines: PipelineConfig,
    pub router: RouterConfig,
    pub mu: f64,
    /// Queries processed concurrently.
    pub workers: usize,
    pub scorer_timeout_ms: u64,
    pub budget: Budget,
    /// Where traces, manifests and reports go.
    pub output_dir: PathBuf,
    /// Emit preference pairs for unsolved queries in the training export.
    pub include_unsolved_pairs: bool,
    /// Call phases counted in the reported average token cost.
    pub token_phases: Vec<Phase>,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            dataset: DatasetSpec::default(),
            gateway: GatewayConfig::default(),
            linker: LinkerConfig::default(),
            pipelines: PipelineConfig::default(),
            router: RouterConfig::default(),
            mu: tiersql_core::report::DEFAULT_MU,
            workers: 4,
            scorer_timeout_ms: 10_000,
            budget: Budget::default(),
            output_dir: PathBuf::from("out"),
            include_unsolved_pairs: false,
            token_phases: vec![Phase::Generation],
        }
    }
}

const SECRET_KEYS: [&str; 4] = ["api_key", "apikey", "token", "secret"];

fn find_secret(v: &Value, path: &str) -> Option<String> {
    match v {
        Value::Object(m) => m.iter().find_map(|(k, v)| {
            let here = format!("{path}.{k}");
            let lower = k.to_ascii_lowercase();
            if SECRET_KEYS.iter().any(|s| lower == *s) {
                Some(here)
            } else {
                find_secret(v, &here)
            }
        }),
        Value::Array(a) => a.iter().enumerate().find_map(|(i, v)| find_secret(v, &format!("{path}[{i}]"))),
        _ => None,
    }
}

impl Config {
    pub fn from_json(text: &str, base: &Path) -> Result<Self, HarnessError> {
        let raw: Value = serde_json::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        if let Some(at) = find_secret(&raw, "$") {
            return Err(HarnessError::Config(format!(
                "{at}: credentials belong in the environment, not the config file"
            )));
        }
        let mut cfg: Config = serde_json::from_value(raw).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.resolve_paths(base);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        Self::from_json(&text, path.parent().unwrap_or(Path::new(".")))
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() && !p.as_os_str().is_empty() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.dataset.questions_file);
        fix(&mut self.dataset.databases_dir);
        if let Some(c) = self.gateway.cache_dir.as_mut() {
            fix(c);
        }
        fix(&mut self.output_dir);
        match &mut self.router {
            RouterConfig::Oracle { labels } => fix(labels),
            RouterConfig::Knn { train, .. } => fix(train),
            _ => {}
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if !(self.mu.is_finite() && self.mu >= 0.0) {
            return Err(HarnessError::Config(format!("mu must be a non-negative number, got {}", self.mu)));
        }
        if self.workers == 0 {
            return Err(HarnessError::Config("workers must be at least 1".into()));
        }
        if let RouterConfig::Knn { k: 0, .. } = self.router {
            return Err(HarnessError::Config("knn k must be at least 1".into()));
        }
        self.pipelines.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        Ok(())
    }

    /// Short router name used for trace file names and report rows.
    pub fn router_name(&self) -> String {
        match &self.router {
            RouterConfig::Fixed { tier } => format!("fixed-{}", tier.name().to_ascii_lowercase()),
            RouterConfig::Oracle { .. } => "oracle".into(),
            RouterConfig::Knn { k, .. } => format!("knn-k{k}"),
            RouterConfig::Score { mode, .. } => format!("score-{}", serde_json::to_value(mode).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default()),
            RouterConfig::Cascade { .. } => "cascade".into(),
        }
    }
}
