//! Phase II routing: map a query and its linked schema to a generation tier.
//!
//! Local routers (KNN, fixed, oracle) are pure. Model-backed routers reach
//! their models through [`TierScorer`] and [`BinaryClassifier`]; the HTTP
//! implementations of those traits live in the engine crate and speak the
//! wire format in [`protocol`].

mod cascade;
mod knn;
pub mod protocol;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{LinkedSchema, Phase, RouterInput, Tier, TokenUsage};
use crate::scalar::Scalar;

pub use cascade::{cascade_route, cascade_select, CascadeRouter};
pub use knn::{knn_route, KnnRouter, DEFAULT_K};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RouteError {
    #[error("router configuration: {0}")]
    Config(String),
    #[error("classifier for stage {stage} failed: {message}")]
    Classifier { stage: usize, message: String },
    #[error("score for {0} is not finite")]
    NonFiniteScore(Tier),
    #[error("scorer protocol violation: {0}")]
    Protocol(String),
    #[error("scorer transport failure: {0}")]
    Transport(String),
    #[error("no oracle label for query `{0}`")]
    MissingOracleLabel(String),
}

/// Size of the linked schema: `(|T|, |C|)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FeatureVector {
    pub n_tables: u32,
    pub n_columns: u32,
}

impl FeatureVector {
    pub fn new(n_tables: u32, n_columns: u32) -> Self {
        Self { n_tables, n_columns }
    }

    /// Squared Euclidean distance; exact in integers.
    pub fn squared_distance(&self, other: &FeatureVector) -> u64 {
        let dt = i64::from(self.n_tables) - i64::from(other.n_tables);
        let dc = i64::from(self.n_columns) - i64::from(other.n_columns);
        (dt * dt + dc * dc) as u64
    }

    pub fn distance<S: Scalar>(&self, other: &FeatureVector) -> S {
        S::from_count(self.squared_distance(other)).sqrt()
    }
}

pub fn build_features(linked: &LinkedSchema) -> FeatureVector {
    FeatureVector::new(linked.table_count() as u32, linked.column_count() as u32)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledPoint {
    pub features: FeatureVector,
    pub label: Tier,
}

/// One finite score per tier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreMap<S> {
    scores: [S; 3],
}

impl<S: Scalar> ScoreMap<S> {
    pub fn new(basic: S, intermediate: S, advanced: S) -> Result<Self, RouteError> {
        Self::from_array([basic, intermediate, advanced])
    }

    pub fn from_array(scores: [S; 3]) -> Result<Self, RouteError> {
        for tier in Tier::ALL {
            if !scores[tier.index()].is_finite() {
                return Err(RouteError::NonFiniteScore(tier));
            }
        }
        Ok(Self { scores })
    }

    pub fn get(&self, tier: Tier) -> S {
        self.scores[tier.index()]
    }

    pub fn as_array(&self) -> [S; 3] {
        self.scores
    }

    /// Highest-scoring tier; exact ties go to the cheaper tier.
    pub fn argmax(&self) -> Tier {
        let mut best = Tier::Basic;
        for tier in Tier::ALL {
            if self.get(tier) > self.get(best) {
                best = tier;
            }
        }
        best
    }

    pub fn to_f64(&self) -> [f64; 3] {
        self.scores.map(|s| s.to_f64().unwrap_or(f64::NAN))
    }
}

/// Outcome of routing one query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoutingDecision {
    pub tier: Tier,
    pub scores: Option<[f64; 3]>,
    pub router_usage: TokenUsage,
    pub router_name: String,
}

impl RoutingDecision {
    pub fn local(tier: Tier, router_name: impl Into<String>) -> Self {
        Self {
            tier,
            scores: None,
            router_usage: TokenUsage::zero(Phase::Routing),
            router_name: router_name.into(),
        }
    }
}

/// Argmax routing over externally produced scores.
pub fn score_route<S: Scalar>(scores: &ScoreMap<S>) -> RoutingDecision {
    RoutingDecision {
        scores: Some(scores.to_f64()),
        ..RoutingDecision::local(scores.argmax(), "score")
    }
}

/// Returns the stored oracle label unchanged.
pub fn oracle_route(label: Tier) -> RoutingDecision {
    RoutingDecision::local(label, "oracle")
}

/// Anything that picks a tier for a query.
pub trait Router: Send + Sync {
    fn name(&self) -> &str;
    fn route(&self, input: &RouterInput<'_>) -> Result<RoutingDecision, RouteError>;
}

/// Produces per-tier scores (multiclass or preference models).
pub trait TierScorer: Send + Sync {
    fn scores(&self, input: &RouterInput<'_>) -> Result<ScoreMap<f64>, RouteError>;
}

/// Decides whether the tier it is bound to can handle a query.
pub trait BinaryClassifier: Send + Sync {
    fn verdict(&self, input: &RouterInput<'_>) -> Result<bool, RouteError>;
}

/// Always routes to one tier; the baseline "always G_x" configuration.
#[derive(Debug, Clone)]
pub struct FixedRouter {
    tier: Tier,
    name: String,
}

impl FixedRouter {
    pub fn new(tier: Tier) -> Self {
        Self {
            tier,
            name: format!("fixed-{}", tier.name().to_ascii_lowercase()),
        }
    }
}

impl Router for FixedRouter {
    fn name(&self) -> &str {
        &self.name
    }

    fn route(&self, _input: &RouterInput<'_>) -> Result<RoutingDecision, RouteError> {
        Ok(RoutingDecision::local(self.tier, &self.name))
    }
}

/// Looks up precomputed oracle labels by query id.
#[derive(Debug, Clone, Default)]
pub struct OracleRouter {
    labels: HashMap<String, Tier>,
}

impl OracleRouter {
    pub fn new(labels: HashMap<String, Tier>) -> Self {
        Self { labels }
    }
}

impl Router for OracleRouter {
    fn name(&self) -> &str {
        "oracle"
    }

    fn route(&self, input: &RouterInput<'_>) -> Result<RoutingDecision, RouteError> {
        self.labels
            .get(input.query_id)
            .map(|t| oracle_route(*t))
            .ok_or_else(|| RouteError::MissingOracleLabel(input.query_id.to_string()))
    }
}

/// Argmax over a [`TierScorer`].
pub struct ScoreRouter {
    scorer: Box<dyn TierScorer>,
    name: String,
}

impl ScoreRouter {
    pub fn new(name: impl Into<String>, scorer: Box<dyn TierScorer>) -> Self {
        Self {
            scorer,
            name: name.into(),
        }
    }
}

impl Router for ScoreRouter {
    fn name(&self) -> &str {
        &self.name
    }

    fn route(&self, input: &RouterInput<'_>) -> Result<RoutingDecision, RouteError> {
        let scores = self.scorer.scores(input)?;
        Ok(RoutingDecision {
            router_name: self.name.clone(),
            ..score_route(&scores)
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{LinkedTable, Provenance};
    use proptest::prelude::*;

    fn linked(entries: &[(&str, &[&str])]) -> LinkedSchema {
        LinkedSchema {
            entries: entries
                .iter()
                .map(|(t, cs)| LinkedTable {
                    table: t.to_string(),
                    columns: cs.iter().map(|c| c.to_string()).collect(),
                })
                .collect(),
            provenance: Provenance::Model,
        }
    }

    #[test]
    fn feature_examples() {
        assert_eq!(build_features(&linked(&[("t1", &["a", "b"])])), FeatureVector::new(1, 2));
        assert_eq!(
            build_features(&linked(&[("t1", &["a"]), ("t2", &["b", "c", "d"])])),
            FeatureVector::new(2, 4)
        );
    }

    #[test]
    fn distance_is_euclidean() {
        let a = FeatureVector::new(1, 2);
        let b = FeatureVector::new(4, 6);
        assert_eq!(a.squared_distance(&b), 25);
        assert_eq!(a.distance::<f64>(&b), 5.0);
        assert_eq!(a.distance::<f32>(&b), 5.0);
    }

    #[test]
    fn score_route_examples() {
        let s = ScoreMap::new(0.1, 0.2, 0.9).unwrap();
        assert_eq!(score_route(&s).tier, Tier::Advanced);
        let s = ScoreMap::new(0.5, 0.5, 0.1).unwrap();
        assert_eq!(score_route(&s).tier, Tier::Basic);
        let s = ScoreMap::new(0.1f64 * 2.0, 0.2 * 2.0, 0.9 * 2.0).unwrap();
        assert_eq!(score_route(&s).tier, Tier::Advanced);
    }

    #[test]
    fn score_map_rejects_non_finite() {
        assert_eq!(
            ScoreMap::new(0.0, f64::NAN, 1.0).unwrap_err(),
            RouteError::NonFiniteScore(Tier::Intermediate)
        );
        assert!(ScoreMap::new(0.0f32, 0.0, f32::INFINITY).is_err());
    }

    #[test]
    fn oracle_route_is_identity() {
        for t in Tier::ALL {
            let d = oracle_route(t);
            assert_eq!(d.tier, t);
            assert_eq!(d.router_usage, TokenUsage::zero(Phase::Routing));
        }
    }

    #[test]
    fn oracle_router_requires_label() {
        let r = OracleRouter::new(HashMap::from([("q1".to_string(), Tier::Intermediate)]));
        let l = linked(&[("t", &["a"])]);
        let mut input = RouterInput {
            query_id: "q1",
            question: "",
            hint: "",
            linked: &l,
        };
        assert_eq!(r.route(&input).unwrap().tier, Tier::Intermediate);
        input.query_id = "q2";
        assert!(matches!(r.route(&input), Err(RouteError::MissingOracleLabel(_))));
    }

    proptest! {
        #[test]
        fn argmax_invariant_under_affine_maps(
            b in -10.0f64..10.0, m in -10.0f64..10.0, a in -10.0f64..10.0,
            shift in -50.0f64..50.0, scale in 0.01f64..100.0,
        ) {
            let base = ScoreMap::new(b, m, a).unwrap().argmax();
            prop_assert_eq!(base, ScoreMap::new(b * scale, m * scale, a * scale).unwrap().argmax());
            // Shifting can merge near-equal scores under rounding; compare on
            // integer-valued scores where addition is exact.
            let (bi, mi, ai) = (b.round(), m.round(), a.round());
            let s = shift.round();
            prop_assert_eq!(
                ScoreMap::new(bi, mi, ai).unwrap().argmax(),
                ScoreMap::new(bi + s, mi + s, ai + s).unwrap().argmax()
            );
        }
    }
}
