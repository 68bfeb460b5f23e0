//! Core of the tiered Text-to-SQL router: domain types, routing logic,
//! waterfall labeling and cost-efficiency metrics.
//!
//! Metric and scoring code is generic over [`Scalar`] (`f32` or `f64`);
//! the aliases below fix the scalar to `f64` for everyday use.

pub mod labeler;
pub mod metrics;
pub mod model;
pub mod pareto;
pub mod report;
pub mod routers;
pub mod scalar;

pub use model::{
    merge_usage, tier_cheaper, ColumnDef, DatabaseSchema, Difficulty, ForeignKey, LinkedSchema, LinkedTable,
    ModelError, NLQuery, Phase, Provenance, RouterInput, RunTrace, TableDef, Tier, TokenUsage,
};
pub use scalar::Scalar;

/// Per-tier scores in double precision.
pub type ScoreMap = routers::ScoreMap<f64>;
/// Pareto point in double precision.
pub type ParetoPoint = pareto::ParetoPoint<f64>;
/// Linking recall and column reduction in double precision.
pub type LinkingQuality = metrics::LinkingQuality<f64>;
