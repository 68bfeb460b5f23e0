//! Benchmark harness: dataset loading, run orchestration, trace files and
//! report emission. The `tiersql` binary is a thin CLI over [`commands`].

pub mod commands;
pub mod config;
pub mod dataset;
pub mod label;
pub mod pool;
pub mod report;
pub mod router;
pub mod run;
pub mod svg;
pub mod trace;

use std::path::PathBuf;

pub use config::{Budget, Config, GatewayConfig, RouterConfig};
pub use dataset::{load_dataset, Dataset, DatasetFormat, DatasetSpec};
pub use run::{RunOptions, RunSummary, Runner};
pub use trace::{read_traces, RunManifest};

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}:{line}: {message}", path.display())]
    Dataset { path: PathBuf, line: usize, message: String },
    #[error("database `{db_id}` not found at {}", path.display())]
    UnknownDatabase { db_id: String, path: PathBuf },
    #[error(transparent)]
    Gateway(#[from] tiersql_gateway::GatewayError),
}
