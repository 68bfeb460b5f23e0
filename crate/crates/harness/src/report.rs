//! Collects trace files into a [`MetricReport`] and writes it out.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use tiersql_core::report::{build_report, oracle_labels_from_baselines, MethodTraces, MetricReport, ReportOptions};
use tiersql_core::{Difficulty, Phase, RunTrace, Tier};

use crate::trace::{read_manifest, read_traces};
use crate::HarnessError;

pub const BASIC_NAME: &str = "fixed-basic";
pub const INTERMEDIATE_NAME: &str = "fixed-intermediate";
pub const ADVANCED_NAME: &str = "fixed-advanced";

#[derive(Debug, Clone)]
pub struct LoadedRun {
    pub name: String,
    pub traces: Vec<RunTrace>,
}

/// Method name: the manifest's router name, else the file stem.
pub fn load_run(path: &Path) -> Result<LoadedRun, HarnessError> {
    let traces = read_traces(path)?;
    let name = match read_manifest(path)? {
        Some(m) => m.router_name,
        None => {
            let file = path.file_name().and_then(|n| n.to_str()).unwrap_or("run");
            file.strip_suffix(".traces.jsonl")
                .or_else(|| file.strip_suffix(".jsonl"))
                .unwrap_or(file)
                .to_string()
        }
    };
    Ok(LoadedRun { name, traces })
}

/// Trace files in a directory, sorted by name.
pub fn trace_files(dir: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    let rd = std::fs::read_dir(dir).map_err(|e| HarnessError::Io { path: dir.to_path_buf(), source: e })?;
    let mut out: Vec<PathBuf> = rd
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.to_str().is_some_and(|s| s.ends_with(".traces.jsonl")))
        .collect();
    out.sort();
    Ok(out)
}

#[derive(Debug, Clone, Default)]
pub struct ReportInputs {
    pub mu: f64,
    pub basic: Option<String>,
    pub advanced: Option<String>,
    /// Oracle labels; when absent they are derived from the three
    /// fixed-tier runs if all are present.
    pub labels: Option<HashMap<String, Tier>>,
    /// Phases counted in T; empty means the default (generation only).
    pub phases: Vec<Phase>,
}

pub fn make_report(runs: &[LoadedRun], inputs: ReportInputs) -> Result<MetricReport, HarnessError> {
    let mut seen = std::collections::HashSet::new();
    if let Some(dup) = runs.iter().find(|r| !seen.insert(r.name.as_str())) {
        return Err(HarnessError::Config(format!("two trace sets are named `{}`", dup.name)));
    }
    let named = |n: &str| runs.iter().find(|r| r.name == n);
    let pick = |given: Option<String>, default: &str| given.or_else(|| named(default).map(|_| default.to_string()));
    let opts = ReportOptions {
        mu: inputs.mu,
        basic: pick(inputs.basic, BASIC_NAME),
        advanced: pick(inputs.advanced, ADVANCED_NAME),
        ..ReportOptions::default()
    };
    let opts = if inputs.phases.is_empty() {
        opts
    } else {
        ReportOptions {
            phases: inputs.phases,
            ..opts
        }
    };
    let labels = inputs.labels.or_else(|| match (named(BASIC_NAME), named(INTERMEDIATE_NAME), named(ADVANCED_NAME)) {
        (Some(b), Some(m), Some(a)) => Some(oracle_labels_from_baselines(&b.traces, &m.traces, &a.traces)),
        _ => None,
    });
    let methods: Vec<MethodTraces<'_>> = runs
        .iter()
        .map(|r| MethodTraces {
            name: r.name.clone(),
            traces: &r.traces,
        })
        .collect();
    let mut report = build_report(&methods, &opts, labels.as_ref()).map_err(|e| HarnessError::Config(e.to_string()))?;
    if labels.is_none() {
        report.notices.push("no oracle labels: UTR and agreement omitted".into());
    }
    Ok(report)
}

fn pct(v: Option<f64>) -> String {
    v.map(|x| format!("{:.2}", x * 100.0)).unwrap_or_else(|| "-".into())
}

fn num(v: Option<f64>, digits: usize) -> String {
    v.map(|x| format!("{x:.digits$}")).unwrap_or_else(|| "-".into())
}

const DIFFICULTIES: [Difficulty; 3] = [Difficulty::Simple, Difficulty::Moderate, Difficulty::Challenging];

/// Plain-text table, one row per method.
pub fn render_text(r: &MetricReport) -> String {
    let header = [
        "method", "EX", "simple", "moderate", "challenging", "T", "PGR", "TEP", "UTR", "agree", "B/M/A", "time_s", "errors",
    ];
    let mut table: Vec<Vec<String>> = vec![header.iter().map(|s| s.to_string()).collect()];
    for row in &r.rows {
        let mut cells = vec![row.method.clone(), pct(row.ex_total)];
        for d in DIFFICULTIES {
            cells.push(pct(row.ex_by_difficulty.get(&d).map(|c| c.ex)));
        }
        cells.extend([
            format!("{:.2}", row.avg_tokens),
            num(row.pgr, 3),
            row.tep.map(|t| format!("{:.3}e-2", t * 100.0)).unwrap_or_else(|| "-".into()),
            num(row.utr, 3),
            num(row.agreement, 3),
            format!("{}/{}/{}", row.tier_counts[0], row.tier_counts[1], row.tier_counts[2]),
            format!("{:.1}", row.total_wall_clock_ms as f64 / 1000.0),
            row.errors.to_string(),
        ]);
        table.push(cells);
    }
    let widths: Vec<usize> = (0..header.len())
        .map(|c| table.iter().map(|r| r[c].chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for (i, r) in table.iter().enumerate() {
        let line: Vec<String> = r
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(c, (s, w))| if c == 0 { format!("{s:<w$}") } else { format!("{s:>w$}") })
            .collect();
        let _ = writeln!(out, "{}", line.join("  ").trim_end());
        if i == 0 {
            let _ = writeln!(out, "{}", "-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1)));
        }
    }
    let _ = writeln!(out, "\nmu = {}; T counts phases {:?}", r.mu, r.phases);
    let _ = writeln!(out, "pareto frontier: {}", r.pareto_frontier.join(" -> "));
    for (k, v) in &r.correlations {
        let _ = writeln!(out, "kendall tau {k}: {v:.3}");
    }
    for n in &r.notices {
        let _ = writeln!(out, "note: {n}");
    }
    if r.rows.iter().any(|row| row.estimated_usage) {
        let _ = writeln!(out, "note: some token counts were estimated from text length");
    }
    out
}

pub fn render_csv(r: &MetricReport) -> Result<String, HarnessError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| HarnessError::Config(e.to_string());
    w.write_record([
        "method", "queries", "evaluated", "correct", "ex", "ex_simple", "ex_moderate", "ex_challenging", "avg_tokens", "pgr",
        "tep", "utr", "agreement", "routed_basic", "routed_intermediate", "routed_advanced", "wall_clock_ms", "errors",
        "estimated_usage", "on_frontier",
    ])
    .map_err(csv_err)?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for row in &r.rows {
        let mut rec = vec![
            row.method.clone(),
            row.queries.to_string(),
            row.evaluated.to_string(),
            row.correct.to_string(),
            opt(row.ex_total),
        ];
        for d in DIFFICULTIES {
            rec.push(opt(row.ex_by_difficulty.get(&d).map(|c| c.ex)));
        }
        rec.extend([
            row.avg_tokens.to_string(),
            opt(row.pgr),
            opt(row.tep),
            opt(row.utr),
            opt(row.agreement),
            row.tier_counts[0].to_string(),
            row.tier_counts[1].to_string(),
            row.tier_counts[2].to_string(),
            row.total_wall_clock_ms.to_string(),
            row.errors.to_string(),
            row.estimated_usage.to_string(),
            r.pareto_frontier.contains(&row.method).to_string(),
        ]);
        w.write_record(&rec).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| HarnessError::Config(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

/// Writes report.{txt,csv,json} and the three figures into `dir`.
pub fn write_report(r: &MetricReport, dir: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::Io { path: dir.to_path_buf(), source: e })?;
    let files = [
        ("report.txt", render_text(r)),
        ("report.csv", render_csv(r)?),
        ("report.json", serde_json::to_string_pretty(r).expect("report serializes") + "\n"),
        ("pareto.svg", crate::svg::pareto_svg(r)),
        ("pgr_tep.svg", crate::svg::pgr_tep_svg(r)),
        ("disagreement.svg", crate::svg::disagreement_svg(r)),
    ];
    let mut written = Vec::new();
    for (name, body) in files {
        let path = dir.join(name);
        std::fs::write(&path, body).map_err(|e| HarnessError::Io { path: path.clone(), source: e })?;
        written.push(path);
    }
    Ok(written)
}
