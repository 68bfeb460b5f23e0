//! Static SVG figures drawn from report data.

use std::fmt::Write;

use tiersql_core::report::MetricReport;
use tiersql_core::Tier;

const W: f64 = 640.0;
const H: f64 = 440.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 30.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Linear scale with 5% padding; a zero-width range is widened to 1.
struct Axis {
    lo: f64,
    hi: f64,
    from: f64,
    to: f64,
}

impl Axis {
    fn new(values: impl Iterator<Item = f64>, from: f64, to: f64) -> Self {
        let (mut lo, mut hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(v), h.max(v)));
        if !lo.is_finite() {
            (lo, hi) = (0.0, 1.0);
        }
        if hi - lo < 1e-12 {
            lo -= 0.5;
            hi += 0.5;
        }
        let pad = (hi - lo) * 0.05;
        Self {
            lo: lo - pad,
            hi: hi + pad,
            from,
            to,
        }
    }

    fn map(&self, v: f64) -> f64 {
        self.from + (v - self.lo) / (self.hi - self.lo) * (self.to - self.from)
    }

    fn ticks(&self) -> Vec<f64> {
        (0..=4).map(|i| self.lo + (self.hi - self.lo) * i as f64 / 4.0).collect()
    }
}

fn frame(out: &mut String, title: &str, xlabel: &str, ylabel: &str, x: &Axis, y: &Axis) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(out, r#"<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>"#, W / 2.0, esc(title));
    let (x0, x1, y0, y1) = (LEFT, W - RIGHT, H - BOTTOM, TOP);
    let _ = writeln!(out, r#"<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/>"#);
    let _ = writeln!(out, r#"<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>"#);
    for t in x.ticks() {
        let px = x.map(t);
        let _ = writeln!(out, r#"<line x1="{px:.1}" y1="{y0}" x2="{px:.1}" y2="{}" stroke="black"/>"#, y0 + 5.0);
        let _ = writeln!(out, r#"<text x="{px:.1}" y="{}" text-anchor="middle">{}</text>"#, y0 + 18.0, fmt_tick(t));
    }
    for t in y.ticks() {
        let py = y.map(t);
        let _ = writeln!(out, r#"<line x1="{}" y1="{py:.1}" x2="{x0}" y2="{py:.1}" stroke="black"/>"#, x0 - 5.0);
        let _ = writeln!(out, r#"<text x="{}" y="{:.1}" text-anchor="end">{}</text>"#, x0 - 8.0, py + 4.0, fmt_tick(t));
    }
    let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, (x0 + x1) / 2.0, H - 15.0, esc(xlabel));
    let _ = writeln!(
        out,
        r#"<text x="18" y="{0}" text-anchor="middle" transform="rotate(-90 18 {0})">{1}</text>"#,
        (y0 + y1) / 2.0,
        esc(ylabel)
    );
}

fn fmt_tick(v: f64) -> String {
    let a = v.abs();
    if a >= 1000.0 {
        format!("{v:.0}")
    } else if a >= 10.0 {
        format!("{v:.1}")
    } else {
        format!("{v:.3}")
    }
}

fn point(out: &mut String, px: f64, py: f64, label: &str, fill: &str) {
    let _ = writeln!(out, r#"<circle cx="{px:.1}" cy="{py:.1}" r="5" fill="{fill}"/>"#);
    let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}">{}</text>"#, px + 7.0, py - 7.0, esc(label));
}

/// EX against average weighted tokens, frontier drawn as a polyline.
pub fn pareto_svg(report: &MetricReport) -> String {
    let pts = report.pareto_points();
    let x = Axis::new(pts.iter().map(|p| p.avg_tokens), LEFT, W - RIGHT);
    let y = Axis::new(pts.iter().map(|p| p.ex * 100.0), H - BOTTOM, TOP);
    let mut out = String::new();
    frame(&mut out, "Execution accuracy vs. token cost", "average weighted tokens", "EX (%)", &x, &y);
    let frontier: Vec<_> = report
        .pareto_frontier
        .iter()
        .filter_map(|m| pts.iter().find(|p| &p.method == m))
        .map(|p| format!("{:.1},{:.1}", x.map(p.avg_tokens), y.map(p.ex * 100.0)))
        .collect();
    if frontier.len() > 1 {
        let _ = writeln!(out, r##"<polyline points="{}" fill="none" stroke="#7b3fa0" stroke-width="2"/>"##, frontier.join(" "));
    }
    for p in &pts {
        let on = report.pareto_frontier.contains(&p.method);
        point(&mut out, x.map(p.avg_tokens), y.map(p.ex * 100.0), &p.method, if on { "#7b3fa0" } else { "#4a7fb5" });
    }
    out.push_str("</svg>\n");
    out
}

/// PGR against TEP for every method that has both.
pub fn pgr_tep_svg(report: &MetricReport) -> String {
    let pts: Vec<(&str, f64, f64)> = report
        .rows
        .iter()
        .filter_map(|r| Some((r.method.as_str(), r.tep?, r.pgr?)))
        .collect();
    let x = Axis::new(pts.iter().map(|p| p.1), LEFT, W - RIGHT);
    let y = Axis::new(pts.iter().map(|p| p.2), H - BOTTOM, TOP);
    let mut out = String::new();
    frame(&mut out, "Gap recovered vs. token elasticity", "TEP", "PGR", &x, &y);
    for (name, tep, pgr) in pts {
        point(&mut out, x.map(tep), y.map(pgr), name, "#4a7fb5");
    }
    out.push_str("</svg>\n");
    out
}

/// One 3x3 oracle-vs-routed heatmap per method that has a matrix.
pub fn disagreement_svg(report: &MetricReport) -> String {
    let rows: Vec<_> = report.rows.iter().filter_map(|r| Some((r.method.as_str(), r.disagreement?))).collect();
    let cell = 36.0;
    let block = cell * 3.0 + 90.0;
    let per_line = 4usize;
    let lines = rows.len().div_ceil(per_line).max(1);
    let (w, h) = (block * per_line as f64 + 20.0, block * lines as f64 + 40.0);
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(out, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(out, r#"<text x="10" y="20" font-size="14">Oracle label (rows) vs. routed tier (columns)</text>"#);
    for (k, (name, m)) in rows.iter().enumerate() {
        let ox = 60.0 + (k % per_line) as f64 * block;
        let oy = 60.0 + (k / per_line) as f64 * block;
        let max = m.counts.iter().flatten().copied().max().unwrap_or(0).max(1) as f64;
        let _ = writeln!(out, r#"<text x="{ox}" y="{}" font-size="12">{}</text>"#, oy - 8.0, esc(name));
        for (i, tier) in Tier::ALL.iter().enumerate() {
            let _ = writeln!(out, r#"<text x="{}" y="{:.1}" text-anchor="end">{}</text>"#, ox - 4.0, oy + cell * (i as f64 + 0.6), tier.short());
            let _ = writeln!(
                out,
                r#"<text x="{:.1}" y="{}" text-anchor="middle">{}</text>"#,
                ox + cell * (i as f64 + 0.5),
                oy + cell * 3.0 + 14.0,
                tier.short()
            );
            for j in 0..3 {
                let v = m.counts[i][j];
                let shade = 255 - (v as f64 / max * 180.0).round() as u8;
                let _ = writeln!(
                    out,
                    r#"<rect x="{:.1}" y="{:.1}" width="{cell}" height="{cell}" fill="rgb({shade},{shade},255)" stroke="gray"/>"#,
                    ox + cell * j as f64,
                    oy + cell * i as f64
                );
                let _ = writeln!(
                    out,
                    r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{v}</text>"#,
                    ox + cell * (j as f64 + 0.5),
                    oy + cell * (i as f64 + 0.6)
                );
            }
        }
    }
    out.push_str("</svg>\n");
    out
}
