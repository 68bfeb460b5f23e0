//! HTTP client for the router scoring service.

use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde_json::Value;
use tiersql_core::routers::protocol::{ScoreMode, ScoreRequest, ScoreResponse, SCORE_PATH};
use tiersql_core::routers::{BinaryClassifier, RouteError, ScoreMap, TierScorer};
use tiersql_core::{RouterInput, Tier};

struct Slots {
    max: usize,
    used: Mutex<usize>,
    cv: Condvar,
}

impl Slots {
    fn run<T>(&self, f: impl FnOnce() -> T) -> T {
        {
            let mut n = self.used.lock().unwrap_or_else(|e| e.into_inner());
            while *n >= self.max {
                n = self.cv.wait(n).unwrap_or_else(|e| e.into_inner());
            }
            *n += 1;
        }
        let out = f();
        *self.used.lock().unwrap_or_else(|e| e.into_inner()) -= 1;
        self.cv.notify_one();
        out
    }
}

pub struct ScorerClient {
    http: reqwest::blocking::Client,
    url: String,
    slots: Slots,
}

impl ScorerClient {
    pub fn new(base_url: &str, timeout: Duration, max_concurrency: usize) -> Result<Self, RouteError> {
        let http = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| RouteError::Transport(e.to_string()))?;
        Ok(Self {
            http,
            url: format!("{}{SCORE_PATH}", base_url.trim_end_matches('/')),
            slots: Slots {
                max: max_concurrency.max(1),
                used: Mutex::new(0),
                cv: Condvar::new(),
            },
        })
    }

    pub fn url(&self) -> &str {
        &self.url
    }

    pub fn score(&self, req: &ScoreRequest) -> Result<ScoreResponse, RouteError> {
        let body: Value = self.slots.run(|| {
            let resp = self
                .http
                .post(&self.url)
                .json(req)
                .send()
                .map_err(|e| RouteError::Transport(e.to_string()))?;
            let status = resp.status();
            if !status.is_success() {
                let text = resp.text().unwrap_or_default();
                return Err(RouteError::Transport(format!("scorer returned HTTP {status}: {text}")));
            }
            resp.json::<Value>()
                .map_err(|e| RouteError::Protocol(format!("response is not JSON: {e}")))
        })?;
        ScoreResponse::parse(req.mode, &body)
    }
}

/// Per-tier scores from the service (multiclass or preference mode).
pub struct RemoteScorer {
    client: std::sync::Arc<ScorerClient>,
    mode: ScoreMode,
}

impl RemoteScorer {
    pub fn new(client: std::sync::Arc<ScorerClient>, mode: ScoreMode) -> Result<Self, RouteError> {
        if mode == ScoreMode::Binary {
            return Err(RouteError::Config("binary mode yields verdicts, not scores".into()));
        }
        Ok(Self { client, mode })
    }
}

impl TierScorer for RemoteScorer {
    fn scores(&self, input: &RouterInput<'_>) -> Result<ScoreMap<f64>, RouteError> {
        match self.client.score(&ScoreRequest::new(self.mode, None, input)?)? {
            ScoreResponse::Scores(s) => Ok(s),
            ScoreResponse::Verdict { .. } => Err(RouteError::Protocol("expected scores, got a verdict".into())),
        }
    }
}

/// One cascade stage served remotely: "is `tier` enough for this query?"
pub struct RemoteClassifier {
    client: std::sync::Arc<ScorerClient>,
    tier: Tier,
}

impl RemoteClassifier {
    pub fn new(client: std::sync::Arc<ScorerClient>, tier: Tier) -> Result<Self, RouteError> {
        if tier == Tier::Advanced {
            return Err(RouteError::Config("the last tier has no classifier".into()));
        }
        Ok(Self { client, tier })
    }
}

impl BinaryClassifier for RemoteClassifier {
    fn verdict(&self, input: &RouterInput<'_>) -> Result<bool, RouteError> {
        match self.client.score(&ScoreRequest::new(ScoreMode::Binary, Some(self.tier), input)?)? {
            ScoreResponse::Verdict { verdict, .. } => Ok(verdict),
            ScoreResponse::Scores(_) => Err(RouteError::Protocol("expected a verdict, got scores".into())),
        }
    }
}
