//! One function per CLI subcommand, callable from tests.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use sha2::{Digest, Sha256};
use tiersql_core::labeler::{export_training_set, label_distribution, ExportOptions};
use tiersql_core::report::MetricReport;
use tiersql_core::routers::protocol::ScoreMode;
use tiersql_core::Tier;
use tiersql_gateway::{GatewayMode, GcReport, ResponseCache};

use crate::config::{Config, RouterConfig};
use crate::dataset::{load_dataset, Dataset};
use crate::label::{link_dataset, LabelSummary, Labeler, LinkRecord};
use crate::report::{load_run, make_report, trace_files, write_report, ReportInputs};
use crate::router::{build_router, labels_from, load_training_set};
use crate::run::{reevaluate, RunOptions, RunSummary, Runner};
use crate::trace::{read_traces, rewrite, write_manifest, RunManifest};
use crate::HarnessError;

/// Command-line adjustments applied on top of the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub router: Option<RouterConfig>,
    pub tier: Option<Tier>,
    pub mode: Option<GatewayMode>,
    pub limit: Option<usize>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut Config) {
        if let Some(r) = &self.router {
            cfg.router = r.clone();
        }
        if let Some(t) = self.tier {
            cfg.router = RouterConfig::Fixed { tier: t };
        }
        if let Some(m) = self.mode {
            cfg.gateway.mode = m;
        }
        if let Some(n) = self.limit {
            cfg.budget.max_queries = Some(cfg.budget.max_queries.map_or(n, |m| m.min(n)));
        }
    }
}

/// Parses `fixed:<tier>`, `oracle:<labels>`, `knn:<train>[:k]`,
/// `score:<url>[@mode]` or `cascade:<url>`.
pub fn parse_router_spec(spec: &str) -> Result<RouterConfig, HarnessError> {
    let bad = || HarnessError::Config(format!("unrecognized router `{spec}`"));
    let (kind, rest) = spec.split_once(':').ok_or_else(bad)?;
    Ok(match kind {
        "fixed" => RouterConfig::Fixed {
            tier: Tier::from_str(rest).map_err(|e| HarnessError::Config(e.to_string()))?,
        },
        "oracle" => RouterConfig::Oracle { labels: rest.into() },
        "knn" => match rest.rsplit_once(':') {
            Some((path, k)) if k.chars().all(|c| c.is_ascii_digit()) && !k.is_empty() => RouterConfig::Knn {
                train: path.into(),
                k: k.parse().map_err(|_| bad())?,
            },
            _ => RouterConfig::Knn {
                train: rest.into(),
                k: tiersql_core::routers::DEFAULT_K,
            },
        },
        "score" => {
            let (url, mode) = match rest.rsplit_once('@') {
                Some((u, m)) => (u, serde_json::from_value::<ScoreMode>(m.into()).map_err(|_| bad())?),
                None => (rest, ScoreMode::Multiclass),
            };
            RouterConfig::Score { url: url.into(), mode }
        }
        "cascade" => RouterConfig::Cascade { url: rest.into() },
        _ => return Err(bad()),
    })
}

pub fn load_config(path: &Path, o: &Overrides) -> Result<Config, HarnessError> {
    let mut cfg = Config::load(path)?;
    o.apply(&mut cfg);
    cfg.validate()?;
    Ok(cfg)
}

fn dataset_for(cfg: &Config) -> Result<Dataset, HarnessError> {
    let mut ds = load_dataset(&cfg.dataset)?;
    ds.truncate(cfg.budget.max_queries);
    Ok(ds)
}

fn ensure_dir(dir: &Path) -> Result<(), HarnessError> {
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::Io { path: dir.to_path_buf(), source: e })
}

pub fn default_trace_path(cfg: &Config) -> PathBuf {
    cfg.output_dir.join(format!("{}.traces.jsonl", cfg.router_name()))
}

fn run_id(cfg: &Config) -> String {
    let mut h = Sha256::new();
    for part in [
        serde_json::to_string(&cfg.dataset),
        serde_json::to_string(&cfg.router),
        serde_json::to_string(&cfg.linker),
        serde_json::to_string(&cfg.pipelines),
    ] {
        h.update(part.expect("config serializes"));
        h.update([0x1f]);
    }
    h.update(cfg.mu.to_string());
    hex::encode(&h.finalize()[..8])
}

pub fn cmd_run(cfg: &Config, trace_path: Option<&Path>) -> Result<(PathBuf, RunSummary), HarnessError> {
    let started_at = chrono::Utc::now().to_rfc3339();
    let dataset = dataset_for(cfg)?;
    let gateway = cfg.gateway.build()?;
    let router = build_router(cfg)?;
    let path = trace_path.map(Path::to_path_buf).unwrap_or_else(|| default_trace_path(cfg));
    if let Some(parent) = path.parent() {
        ensure_dir(parent)?;
    }
    let runner = Runner {
        dataset: &dataset,
        gateway: &gateway,
        router: router.as_ref(),
        linker: &cfg.linker,
        pipelines: &cfg.pipelines,
    };
    let opts = RunOptions {
        workers: cfg.workers,
        mu: cfg.mu,
        max_weighted_tokens: cfg.budget.max_weighted_tokens,
        record_timing: cfg.gateway.mode != GatewayMode::ReplayStrict,
    };
    let summary = runner.run(&path, &opts)?;
    write_manifest(
        &path,
        &RunManifest {
            run_id: run_id(cfg),
            dataset: cfg.dataset.clone(),
            router_name: cfg.router_name(),
            router: cfg.router.clone(),
            linker: cfg.linker.clone(),
            pipelines: cfg.pipelines.clone(),
            gateway_mode: cfg.gateway.mode,
            cache_dir: cfg.gateway.cache_dir.clone(),
            mu: cfg.mu,
            started_at,
            finished_at: chrono::Utc::now().to_rfc3339(),
            engine_version: env!("CARGO_PKG_VERSION").to_string(),
            queries: dataset.queries.len(),
            resumed: summary.resumed,
        },
    )?;
    Ok((path, summary))
}

pub fn cmd_label(cfg: &Config, out: Option<&Path>) -> Result<(PathBuf, LabelSummary), HarnessError> {
    let dataset = load_dataset(&cfg.dataset)?;
    let gateway = cfg.gateway.build()?;
    let labeler = Labeler {
        dataset: &dataset,
        gateway: &gateway,
        linker: &cfg.linker,
        pipelines: &cfg.pipelines,
        mu: cfg.mu,
    };
    let summary = labeler.run(&cfg.budget, cfg.workers)?;
    let path = out.map(Path::to_path_buf).unwrap_or_else(|| cfg.output_dir.join("labels.jsonl"));
    if let Some(parent) = path.parent() {
        ensure_dir(parent)?;
    }
    export_training_set(
        &summary.examples,
        &path,
        ExportOptions {
            include_unsolved_pairs: cfg.include_unsolved_pairs,
        },
    )
    .map_err(|e| HarnessError::Config(e.to_string()))?;
    Ok((path, summary))
}

pub fn label_counts(summary: &LabelSummary) -> [usize; 3] {
    label_distribution(&summary.examples)
}

pub fn cmd_link(cfg: &Config, out: Option<&Path>) -> Result<(PathBuf, Vec<LinkRecord>), HarnessError> {
    let dataset = dataset_for(cfg)?;
    let gateway = cfg.gateway.build()?;
    let records = link_dataset(&dataset, &gateway, &cfg.linker, cfg.workers)?;
    let path = out.map(Path::to_path_buf).unwrap_or_else(|| cfg.output_dir.join("links.jsonl"));
    if let Some(parent) = path.parent() {
        ensure_dir(parent)?;
    }
    let mut text = String::new();
    for r in &records {
        text.push_str(&serde_json::to_string(r).expect("link record serializes"));
        text.push('\n');
    }
    std::fs::write(&path, text).map_err(|e| HarnessError::Io { path: path.clone(), source: e })?;
    Ok((path, records))
}

/// Re-scores a trace file in place; returns how many verdicts changed.
pub fn cmd_eval(cfg: &Config, trace_path: &Path) -> Result<usize, HarnessError> {
    let dataset = load_dataset(&cfg.dataset)?;
    let mut traces = read_traces(trace_path)?;
    let changed = reevaluate(&dataset, &mut traces, &cfg.pipelines.exec, cfg.workers)?;
    rewrite(trace_path, &traces)?;
    Ok(changed)
}

pub struct ReportRequest<'a> {
    pub traces: &'a [PathBuf],
    pub labels: Option<&'a Path>,
    pub basic: Option<String>,
    pub advanced: Option<String>,
    pub out_dir: Option<&'a Path>,
}

pub fn cmd_report(cfg: &Config, req: ReportRequest<'_>) -> Result<(MetricReport, Vec<PathBuf>), HarnessError> {
    let paths = if req.traces.is_empty() {
        trace_files(&cfg.output_dir)?
    } else {
        req.traces.to_vec()
    };
    if paths.is_empty() {
        return Err(HarnessError::Config(format!("no trace files in {}", cfg.output_dir.display())));
    }
    let runs = paths.iter().map(|p| load_run(p)).collect::<Result<Vec<_>, _>>()?;
    let labels = req.labels.map(|p| load_training_set(p).map(|r| labels_from(&r))).transpose()?;
    let report = make_report(
        &runs,
        ReportInputs {
            mu: cfg.mu,
            basic: req.basic,
            advanced: req.advanced,
            labels,
            phases: cfg.token_phases.clone(),
        },
    )?;
    let dir = req.out_dir.map(Path::to_path_buf).unwrap_or_else(|| cfg.output_dir.join("report"));
    let written = write_report(&report, &dir)?;
    Ok((report, written))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CacheSummary {
    pub entries: usize,
    /// Entry count per model, sorted by model name.
    pub models: Vec<(String, usize)>,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub estimated: usize,
}

fn open_cache(cfg: &Config) -> Result<ResponseCache, HarnessError> {
    let dir = cfg
        .gateway
        .cache_dir
        .as_ref()
        .ok_or_else(|| HarnessError::Config("gateway.cache_dir is not set".into()))?;
    Ok(ResponseCache::open(dir)?)
}

pub fn cmd_cache_inspect(cfg: &Config) -> Result<CacheSummary, HarnessError> {
    let entries = open_cache(cfg)?.entries()?;
    let mut models = std::collections::BTreeMap::<String, usize>::new();
    for e in &entries {
        *models.entry(e.request.model.clone()).or_default() += 1;
    }
    Ok(CacheSummary {
        entries: entries.len(),
        models: models.into_iter().collect(),
        prompt_tokens: entries.iter().map(|e| e.response.usage.prompt_tokens).sum(),
        completion_tokens: entries.iter().map(|e| e.response.usage.completion_tokens).sum(),
        estimated: entries.iter().filter(|e| e.response.usage.estimated).count(),
    })
}

pub fn cmd_cache_gc(cfg: &Config) -> Result<GcReport, HarnessError> {
    Ok(open_cache(cfg)?.gc()?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn router_specs() {
        assert_eq!(parse_router_spec("fixed:m").unwrap(), RouterConfig::Fixed { tier: Tier::Intermediate });
        assert_eq!(
            parse_router_spec("knn:/tmp/a.jsonl:7").unwrap(),
            RouterConfig::Knn { train: "/tmp/a.jsonl".into(), k: 7 }
        );
        assert_eq!(parse_router_spec("knn:a.jsonl").unwrap(), RouterConfig::Knn { train: "a.jsonl".into(), k: 5 });
        assert_eq!(
            parse_router_spec("score:http://h:1@preference").unwrap(),
            RouterConfig::Score { url: "http://h:1".into(), mode: ScoreMode::Preference }
        );
        assert_eq!(
            parse_router_spec("score:http://h:1").unwrap(),
            RouterConfig::Score { url: "http://h:1".into(), mode: ScoreMode::Multiclass }
        );
        assert!(parse_router_spec("magic:x").is_err());
        assert!(parse_router_spec("fixed:huge").is_err());
    }

    #[test]
    fn overrides_apply_in_order() {
        let mut cfg = Config::default();
        cfg.budget.max_queries = Some(5);
        Overrides {
            router: Some(RouterConfig::Cascade { url: "u".into() }),
            tier: Some(Tier::Advanced),
            mode: Some(GatewayMode::Record),
            limit: Some(9),
        }
        .apply(&mut cfg);
        assert_eq!(cfg.router, RouterConfig::Fixed { tier: Tier::Advanced });
        assert_eq!(cfg.gateway.mode, GatewayMode::Record);
        assert_eq!(cfg.budget.max_queries, Some(5));
    }
}
