//! K-nearest-neighbour routing on linked-schema size.

use crate::model::{RouterInput, Tier};

use super::{build_features, FeatureVector, LabeledPoint, RouteError, Router, RoutingDecision};

pub const DEFAULT_K: usize = 5;

/// Majority label among the `k` nearest training points.
///
/// Neighbours are ordered by Euclidean distance, then by training index, so
/// equal distances favour earlier points. A tied vote goes to the cheaper
/// tier. `k` larger than the training set uses every point.
pub fn knn_route(v: FeatureVector, train: &[LabeledPoint], k: usize) -> Result<RoutingDecision, RouteError> {
    if train.is_empty() {
        return Err(RouteError::Config("KNN training set is empty".into()));
    }
    if k == 0 {
        return Err(RouteError::Config("KNN k must be at least 1".into()));
    }
    let mut order: Vec<(u64, usize)> = train
        .iter()
        .enumerate()
        .map(|(i, p)| (v.squared_distance(&p.features), i))
        .collect();
    order.sort_unstable();

    let mut votes = [0usize; 3];
    for (_, i) in order.iter().take(k) {
        votes[train[*i].label.index()] += 1;
    }
    let mut best = Tier::Basic;
    for tier in Tier::ALL {
        if votes[tier.index()] > votes[best.index()] {
            best = tier;
        }
    }
    Ok(RoutingDecision::local(best, "knn"))
}

#[derive(Debug, Clone)]
pub struct KnnRouter {
    train: Vec<LabeledPoint>,
    k: usize,
}

impl KnnRouter {
    pub fn new(train: Vec<LabeledPoint>, k: usize) -> Result<Self, RouteError> {
        if train.is_empty() {
            return Err(RouteError::Config("KNN training set is empty".into()));
        }
        if k == 0 {
            return Err(RouteError::Config("KNN k must be at least 1".into()));
        }
        Ok(Self { train, k })
    }

    pub fn k(&self) -> usize {
        self.k
    }
}

impl Router for KnnRouter {
    fn name(&self) -> &str {
        "knn"
    }

    fn route(&self, input: &RouterInput<'_>) -> Result<RoutingDecision, RouteError> {
        knn_route(build_features(input.linked), &self.train, self.k)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(t: u32, c: u32, label: Tier) -> LabeledPoint {
        LabeledPoint {
            features: FeatureVector::new(t, c),
            label,
        }
    }

    #[test]
    fn exact_match_with_k1() {
        let train = [p(5, 30, Tier::Advanced), p(1, 2, Tier::Basic), p(3, 9, Tier::Intermediate)];
        assert_eq!(knn_route(FeatureVector::new(1, 2), &train, 1).unwrap().tier, Tier::Basic);
    }

    #[test]
    fn majority_vote() {
        let train = [
            p(2, 6, Tier::Advanced),
            p(2, 7, Tier::Advanced),
            p(2, 5, Tier::Basic),
            p(9, 40, Tier::Basic),
            p(9, 41, Tier::Basic),
        ];
        assert_eq!(knn_route(FeatureVector::new(2, 6), &train, 3).unwrap().tier, Tier::Advanced);
    }

    #[test]
    fn tied_vote_goes_cheaper() {
        let train = [p(1, 3, Tier::Advanced), p(1, 1, Tier::Basic), p(8, 8, Tier::Advanced)];
        assert_eq!(knn_route(FeatureVector::new(1, 2), &train, 2).unwrap().tier, Tier::Basic);
    }

    #[test]
    fn equal_distance_prefers_lower_index() {
        // Both at distance 1; k = 1 must pick index 0.
        let train = [p(1, 3, Tier::Advanced), p(1, 1, Tier::Basic)];
        assert_eq!(knn_route(FeatureVector::new(1, 2), &train, 1).unwrap().tier, Tier::Advanced);
        let swapped = [p(1, 1, Tier::Basic), p(1, 3, Tier::Advanced)];
        assert_eq!(knn_route(FeatureVector::new(1, 2), &swapped, 1).unwrap().tier, Tier::Basic);
    }

    #[test]
    fn large_k_uses_all_points() {
        let train = [p(1, 1, Tier::Advanced), p(1, 1, Tier::Advanced), p(1, 1, Tier::Basic)];
        assert_eq!(knn_route(FeatureVector::new(0, 0), &train, 50).unwrap().tier, Tier::Advanced);
    }

    #[test]
    fn configuration_errors() {
        assert!(matches!(knn_route(FeatureVector::new(0, 0), &[], 3), Err(RouteError::Config(_))));
        assert!(matches!(
            knn_route(FeatureVector::new(0, 0), &[p(1, 1, Tier::Basic)], 0),
            Err(RouteError::Config(_))
        ));
        assert!(KnnRouter::new(vec![], 5).is_err());
    }
}
