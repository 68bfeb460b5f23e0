//! Trace JSONL files and their manifest sidecars.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tiersql_core::RunTrace;
use tiersql_engine::{LinkerConfig, PipelineConfig};
use tiersql_gateway::GatewayMode;

use crate::config::RouterConfig;
use crate::dataset::DatasetSpec;
use crate::HarnessError;

/// Everything needed to re-execute a run in replay mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub dataset: DatasetSpec,
    pub router_name: String,
    pub router: RouterConfig,
    pub linker: LinkerConfig,
    pub pipelines: PipelineConfig,
    pub gateway_mode: GatewayMode,
    pub cache_dir: Option<PathBuf>,
    pub mu: f64,
    pub started_at: String,
    pub finished_at: String,
    pub engine_version: String,
    pub queries: usize,
    pub resumed: usize,
}

pub fn manifest_path(trace_path: &Path) -> PathBuf {
    let name = trace_path.file_name().and_then(|n| n.to_str()).unwrap_or("run");
    let stem = name.strip_suffix(".traces.jsonl").or_else(|| name.strip_suffix(".jsonl")).unwrap_or(name);
    trace_path.with_file_name(format!("{stem}.manifest.json"))
}

pub fn write_manifest(trace_path: &Path, m: &RunManifest) -> Result<(), HarnessError> {
    let path = manifest_path(trace_path);
    let text = serde_json::to_string_pretty(m).expect("manifest serializes");
    std::fs::write(&path, text + "\n").map_err(|e| HarnessError::Io { path, source: e })
}

pub fn read_manifest(trace_path: &Path) -> Result<Option<RunManifest>, HarnessError> {
    let path = manifest_path(trace_path);
    if !path.exists() {
        return Ok(None);
    }
    let text = std::fs::read_to_string(&path).map_err(|e| HarnessError::Io { path: path.clone(), source: e })?;
    serde_json::from_str(&text)
        .map(Some)
        .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))
}

/// Appends one trace per line and flushes after each, so a crash loses at
/// most the line being written.
pub struct TraceWriter {
    out: BufWriter<File>,
    path: PathBuf,
}

impl TraceWriter {
    pub fn append(path: &Path) -> Result<Self, HarnessError> {
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| HarnessError::Io { path: path.to_path_buf(), source: e })?;
        Ok(Self {
            out: BufWriter::new(file),
            path: path.to_path_buf(),
        })
    }

    pub fn write(&mut self, t: &RunTrace) -> Result<(), HarnessError> {
        let line = serde_json::to_string(t).expect("trace serializes");
        self.out
            .write_all(line.as_bytes())
            .and_then(|_| self.out.write_all(b"\n"))
            .and_then(|_| self.out.flush())
            .map_err(|e| HarnessError::Io { path: self.path.clone(), source: e })
    }
}

fn parse_lines(path: &Path, lenient_tail: bool) -> Result<(Vec<RunTrace>, bool), HarnessError> {
    let file = File::open(path).map_err(|e| HarnessError::Io { path: path.to_path_buf(), source: e })?;
    let lines: Vec<String> = BufReader::new(file)
        .lines()
        .collect::<Result<_, _>>()
        .map_err(|e| HarnessError::Io { path: path.to_path_buf(), source: e })?;
    let mut out = Vec::with_capacity(lines.len());
    let mut dropped_tail = false;
    for (i, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<RunTrace>(line) {
            Ok(t) => out.push(t),
            Err(_) if lenient_tail && i + 1 == lines.len() => dropped_tail = true,
            Err(e) => {
                return Err(HarnessError::Dataset {
                    path: path.to_path_buf(),
                    line: i + 1,
                    message: e.to_string(),
                })
            }
        }
    }
    Ok((out, dropped_tail))
}

pub fn read_traces(path: &Path) -> Result<Vec<RunTrace>, HarnessError> {
    parse_lines(path, false).map(|(t, _)| t)
}

/// Reads a possibly interrupted trace file. A half-written last line is
/// dropped and the file rewritten without it.
pub fn recover_traces(path: &Path) -> Result<Vec<RunTrace>, HarnessError> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let (traces, dropped) = parse_lines(path, true)?;
    if dropped {
        log::warn!("{}: dropping a truncated final line", path.display());
        rewrite(path, &traces)?;
    }
    Ok(traces)
}

/// Atomically replaces the file with `traces`.
pub fn rewrite(path: &Path, traces: &[RunTrace]) -> Result<(), HarnessError> {
    let tmp = path.with_extension("jsonl.tmp");
    let io = |e| HarnessError::Io { path: tmp.clone(), source: e };
    {
        let mut out = BufWriter::new(File::create(&tmp).map_err(io)?);
        for t in traces {
            serde_json::to_writer(&mut out, t).expect("trace serializes");
            out.write_all(b"\n").map_err(io)?;
        }
        out.flush().map_err(io)?;
    }
    std::fs::rename(&tmp, path).map_err(|e| HarnessError::Io { path: path.to_path_buf(), source: e })
}

/// Sorts traces into dataset order; ids not in `order` go last by id.
pub fn sort_by_dataset(traces: &mut [RunTrace], order: &[String]) {
    let rank: HashMap<&str, usize> = order.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
    traces.sort_by(|a, b| {
        let ra = rank.get(a.query_id.as_str()).copied().unwrap_or(usize::MAX);
        let rb = rank.get(b.query_id.as_str()).copied().unwrap_or(usize::MAX);
        ra.cmp(&rb).then_with(|| a.query_id.cmp(&b.query_id))
    });
}
