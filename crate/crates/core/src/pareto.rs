//! Accuracy/cost Pareto frontier.

use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoPoint<S> {
    pub method: String,
    pub ex: S,
    pub avg_tokens: S,
}

impl<S: Scalar> ParetoPoint<S> {
    pub fn new(method: impl Into<String>, ex: S, avg_tokens: S) -> Self {
        Self {
            method: method.into(),
            ex,
            avg_tokens,
        }
    }

    /// No worse on both axes and strictly better on at least one.
    pub fn dominates(&self, other: &Self) -> bool {
        self.ex >= other.ex
            && self.avg_tokens <= other.avg_tokens
            && (self.ex > other.ex || self.avg_tokens < other.avg_tokens)
    }
}

/// Non-dominated points sorted by token cost ascending (input order breaks
/// ties).
pub fn pareto_frontier<S: Scalar>(points: &[ParetoPoint<S>]) -> Vec<ParetoPoint<S>> {
    let mut frontier: Vec<ParetoPoint<S>> = points
        .iter()
        .filter(|p| !points.iter().any(|q| q.dominates(p)))
        .cloned()
        .collect();
    frontier.sort_by(|a, b| a.avg_tokens.partial_cmp(&b.avg_tokens).unwrap_or(std::cmp::Ordering::Equal));
    frontier
}
