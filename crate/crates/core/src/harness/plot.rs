use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use super::run::{parse_metrics, MetricsRow};
use crate::{Error, Result};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 50.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Success,
    Return,
}

impl Metric {
    fn of(self, row: &MetricsRow) -> f64 {
        match self {
            Metric::Success => row.success_rate,
            Metric::Return => row.mean_return,
        }
    }

    fn label(self) -> &'static str {
        match self {
            Metric::Success => "success rate",
            Metric::Return => "mean return",
        }
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "success" => Ok(Metric::Success),
            "return" => Ok(Metric::Return),
            other => Err(Error::invalid(format!("unknown metric `{other}` (expected success|return)"))),
        }
    }
}

/// One curve: per evaluation index, mean env steps, mean metric and its
/// standard error across seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub x: Vec<f64>,
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
}

/// Seeds are aligned by evaluation index and truncated to the shortest run.
pub fn aggregate(label: &str, runs: &[Vec<MetricsRow>], metric: Metric) -> Result<Series> {
    let len = runs.iter().map(Vec::len).min().ok_or(Error::Empty("metrics runs"))?;
    if len == 0 {
        return Err(Error::Empty("metrics rows"));
    }
    let n = runs.len() as f64;
    let mut s = Series {
        label: label.to_string(),
        x: Vec::with_capacity(len),
        mean: Vec::with_capacity(len),
        stderr: Vec::with_capacity(len),
    };
    for i in 0..len {
        let ys: Vec<f64> = runs.iter().map(|r| metric.of(&r[i])).collect();
        let mean = ys.iter().sum::<f64>() / n;
        let var = if runs.len() > 1 { ys.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
        s.x.push(runs.iter().map(|r| r[i].env_steps as f64).sum::<f64>() / n);
        s.mean.push(mean);
        s.stderr.push((var / n).sqrt());
    }
    Ok(s)
}

/// Strategy key from `metrics_<strategy>_seed<n>.csv`, or the file stem.
pub fn strategy_label(path: &Path) -> String {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("run");
    let body = stem.strip_prefix("metrics_").unwrap_or(stem);
    match body.rfind("_seed") {
        Some(i) => body[..i].to_string(),
        None => body.to_string(),
    }
}

/// `metrics_*.csv` files directly inside `dir`, sorted.
pub fn metrics_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
        if name.starts_with("metrics_") && name.ends_with(".csv") {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

fn fmt(v: f64) -> String {
    format!("{v:.2}")
}

pub fn render_svg(series: &[Series], metric: Metric) -> String {
    let xs = series.iter().flat_map(|s| s.x.iter().copied());
    let (x_lo, x_hi) = xs.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
    let ys = series.iter().flat_map(|s| s.mean.iter().zip(&s.stderr).flat_map(|(m, e)| [m - e, m + e]));
    let (mut y_lo, mut y_hi) = ys.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), y| (a.min(y), b.max(y)));
    if metric == Metric::Success {
        y_lo = y_lo.min(0.0);
        y_hi = y_hi.max(1.0);
    }
    let span = |lo: f64, hi: f64| if hi > lo { hi - lo } else { 1.0 };
    let (xs, ys) = (span(x_lo, x_hi), span(y_lo, y_hi));
    let px = |x: f64| MARGIN + (x - x_lo) / xs * (WIDTH - 2.0 * MARGIN);
    let py = |y: f64| HEIGHT - MARGIN - (y - y_lo) / ys * (HEIGHT - 2.0 * MARGIN);

    let mut out = String::new();
    let _ = writeln!(out, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#);
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let (left, right, top, bottom) = (MARGIN, WIDTH - MARGIN, MARGIN, HEIGHT - MARGIN);
    let _ = writeln!(out, r#"<line x1="{left}" y1="{bottom}" x2="{right}" y2="{bottom}" stroke="black"/>"#);
    let _ = writeln!(out, r#"<line x1="{left}" y1="{bottom}" x2="{left}" y2="{top}" stroke="black"/>"#);
    let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="middle" font-size="12">env steps</text>"#, WIDTH / 2.0, HEIGHT - 12.0);
    let _ = writeln!(
        out,
        r#"<text x="14" y="{}" text-anchor="middle" font-size="12" transform="rotate(-90 14 {})">{}</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0,
        metric.label()
    );
    for (v, anchor, x, y) in [(x_lo, "start", left, bottom + 16.0), (x_hi, "end", right, bottom + 16.0)] {
        let _ = writeln!(out, r#"<text x="{x}" y="{y}" text-anchor="{anchor}" font-size="10">{v:.0}</text>"#);
    }
    for (v, y) in [(y_lo, bottom), (y_hi, top)] {
        let _ = writeln!(out, r#"<text x="{}" y="{y}" text-anchor="end" font-size="10">{v:.3}</text>"#, left - 4.0);
    }
    for (i, s) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let upper = s.x.iter().zip(s.mean.iter().zip(&s.stderr)).map(|(x, (m, e))| format!("{},{}", fmt(px(*x)), fmt(py(m + e))));
        let lower = s.x.iter().zip(s.mean.iter().zip(&s.stderr)).rev().map(|(x, (m, e))| format!("{},{}", fmt(px(*x)), fmt(py(m - e))));
        let band: Vec<String> = upper.chain(lower).collect();
        let _ = writeln!(out, r#"<polygon points="{}" fill="{color}" fill-opacity="0.2" stroke="none"/>"#, band.join(" "));
        let line: Vec<String> = s.x.iter().zip(&s.mean).map(|(x, m)| format!("{},{}", fmt(px(*x)), fmt(py(*m)))).collect();
        let _ = writeln!(
            out,
            r#"<polyline data-label="{}" points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            s.label,
            line.join(" ")
        );
        let ly = top + 14.0 * i as f64;
        let _ = writeln!(out, r#"<text x="{}" y="{ly}" font-size="11" fill="{color}">{}</text>"#, right - 90.0, s.label);
    }
    out.push_str("</svg>\n");
    out
}

/// Group metrics files by strategy, aggregate seeds and write an SVG.
pub fn emit_plot(files: &[PathBuf], metric: Metric, out: &Path) -> Result<()> {
    if files.is_empty() {
        return Err(Error::Empty("metrics files"));
    }
    let mut groups: BTreeMap<String, Vec<Vec<MetricsRow>>> = BTreeMap::new();
    for f in files {
        let text = std::fs::read_to_string(f).map_err(|e| Error::io(f, e))?;
        groups.entry(strategy_label(f)).or_default().push(parse_metrics(&text)?);
    }
    let series = groups.iter().map(|(label, runs)| aggregate(label, runs, metric)).collect::<Result<Vec<_>>>()?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(out, render_svg(&series, metric)).map_err(|e| Error::io(out, e))
}
