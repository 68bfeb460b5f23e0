//! Waterfall routing over ordered binary classifiers.

use crate::model::{RouterInput, Tier};

use super::{BinaryClassifier, RouteError, Router, RoutingDecision};

/// Index of the selected method among `n`, given lazily evaluated verdicts
/// for the first `n - 1` methods. The first positive verdict wins and no
/// later verdict is requested; if none is positive the last method is
/// selected.
pub fn cascade_select<E, F>(n: usize, mut verdict: F) -> Result<usize, E>
where
    F: FnMut(usize) -> Result<bool, E>,
{
    assert!(n >= 1, "cascade needs at least one method");
    for i in 0..n - 1 {
        if verdict(i)? {
            return Ok(i);
        }
    }
    Ok(n - 1)
}

/// Routes with classifiers ordered cheapest first, one per tier except the
/// most expensive.
pub fn cascade_route(
    classifiers: &[&dyn BinaryClassifier],
    input: &RouterInput<'_>,
) -> Result<RoutingDecision, RouteError> {
    let n = Tier::ALL.len();
    if classifiers.len() != n - 1 {
        return Err(RouteError::Config(format!(
            "cascade needs {} classifiers, got {}",
            n - 1,
            classifiers.len()
        )));
    }
    let index = cascade_select(n, |i| {
        classifiers[i].verdict(input).map_err(|e| RouteError::Classifier {
            stage: i + 1,
            message: e.to_string(),
        })
    })?;
    Ok(RoutingDecision::local(Tier::ALL[index], "cascade"))
}

pub struct CascadeRouter {
    classifiers: Vec<Box<dyn BinaryClassifier>>,
    name: String,
}

impl CascadeRouter {
    pub fn new(name: impl Into<String>, classifiers: Vec<Box<dyn BinaryClassifier>>) -> Result<Self, RouteError> {
        if classifiers.len() != Tier::ALL.len() - 1 {
            return Err(RouteError::Config(format!(
                "cascade needs {} classifiers, got {}",
                Tier::ALL.len() - 1,
                classifiers.len()
            )));
        }
        Ok(Self {
            classifiers,
            name: name.into(),
        })
    }
}

impl Router for CascadeRouter {
    fn name(&self) -> &str {
        &self.name
    }

    fn route(&self, input: &RouterInput<'_>) -> Result<RoutingDecision, RouteError> {
        let refs: Vec<&dyn BinaryClassifier> = self.classifiers.iter().map(|c| c.as_ref()).collect();
        let mut d = cascade_route(&refs, input)?;
        d.router_name = self.name.clone();
        Ok(d)
    }
}
