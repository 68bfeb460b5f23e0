//! Builds a [`Router`] from its config section.

use std::collections::HashMap;
use std::io::BufReader;
use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use tiersql_core::labeler::{read_training_set, TrainingRecord};
use tiersql_core::routers::{BinaryClassifier, CascadeRouter, FixedRouter, KnnRouter, OracleRouter, Router, ScoreRouter};
use tiersql_core::Tier;
use tiersql_engine::{RemoteClassifier, RemoteScorer, ScorerClient};

use crate::config::{Config, RouterConfig};
use crate::HarnessError;

pub fn load_training_set(path: &Path) -> Result<Vec<TrainingRecord>, HarnessError> {
    let file = std::fs::File::open(path).map_err(|e| HarnessError::Io { path: path.to_path_buf(), source: e })?;
    read_training_set(BufReader::new(file)).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))
}

pub fn labels_from(records: &[TrainingRecord]) -> HashMap<String, Tier> {
    records.iter().map(|r| (r.query_id.clone(), r.label)).collect()
}

pub fn build_router(cfg: &Config) -> Result<Box<dyn Router>, HarnessError> {
    let route_err = |e: tiersql_core::routers::RouteError| HarnessError::Config(e.to_string());
    let client = |url: &str| -> Result<Arc<ScorerClient>, HarnessError> {
        Ok(Arc::new(
            ScorerClient::new(url, Duration::from_millis(cfg.scorer_timeout_ms), cfg.workers).map_err(route_err)?,
        ))
    };
    Ok(match &cfg.router {
        RouterConfig::Fixed { tier } => Box::new(FixedRouter::new(*tier)),
        RouterConfig::Oracle { labels } => Box::new(OracleRouter::new(labels_from(&load_training_set(labels)?))),
        RouterConfig::Knn { train, k } => {
            let points = load_training_set(train)?
                .into_iter()
                .map(|r| r.into_example().point())
                .collect();
            Box::new(KnnRouter::new(points, *k).map_err(route_err)?)
        }
        RouterConfig::Score { url, mode } => {
            let scorer = RemoteScorer::new(client(url)?, *mode).map_err(route_err)?;
            Box::new(ScoreRouter::new(cfg.router_name(), Box::new(scorer)))
        }
        RouterConfig::Cascade { url } => {
            let c = client(url)?;
            let stages = [Tier::Basic, Tier::Intermediate]
                .into_iter()
                .map(|t| RemoteClassifier::new(c.clone(), t).map(|r| Box::new(r) as Box<dyn BinaryClassifier>))
                .collect::<Result<Vec<_>, _>>()
                .map_err(route_err)?;
            Box::new(CascadeRouter::new("cascade", stages).map_err(route_err)?)
        }
    })
}
