//! Static SVG line charts of trace CSVs.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{BenchError, Result};
use crate::runner::{read_trace, TraceRow};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlotKind {
    Gap,
    K,
    Recovery,
}

impl PlotKind {
    pub fn log_scale(&self) -> bool {
        !matches!(self, PlotKind::K)
    }

    fn label(&self) -> &'static str {
        match self {
            PlotKind::Gap => "objective gap",
            PlotKind::K => "K",
            PlotKind::Recovery => "recovery error",
        }
    }

    fn value(&self, r: &TraceRow) -> Option<f64> {
        match self {
            PlotKind::Gap => Some(r.gap),
            PlotKind::K => Some(r.k as f64),
            PlotKind::Recovery => r.recovery_err,
        }
    }
}

impl std::str::FromStr for PlotKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "gap" => Ok(PlotKind::Gap),
            "k" | "K" => Ok(PlotKind::K),
            "recovery" => Ok(PlotKind::Recovery),
            other => Err(format!("unknown plot kind {other:?} (gap, k, recovery)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlotPoint {
    pub iter: usize,
    pub stage: usize,
    pub value: f64,
}

/// One plotted line. On log axes, rows with non-positive values are dropped.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub points: Vec<PlotPoint>,
}

pub fn series_from_rows(name: &str, rows: &[TraceRow], kind: PlotKind) -> Series {
    let points = rows
        .iter()
        .filter_map(|r| {
            let v = kind.value(r)?;
            (v.is_finite() && (!kind.log_scale() || v > 0.0)).then_some(PlotPoint {
                iter: r.iter_global,
                stage: r.stage,
                value: v,
            })
        })
        .collect();
    Series {
        name: name.to_string(),
        points,
    }
}

/// Read the traces, render one chart and write it to `out`. Returns the
/// plotted series. Nothing is written when a trace fails to parse.
pub fn emit_plot(traces: &[PathBuf], kind: PlotKind, out: &Path) -> Result<Vec<Series>> {
    if traces.is_empty() {
        return Err(BenchError::config("no trace files to plot"));
    }
    let mut series = Vec::with_capacity(traces.len());
    for path in traces {
        let rows = read_trace(path)?;
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.display().to_string());
        series.push(series_from_rows(&name, &rows, kind));
    }
    let svg = render_svg(&series, kind);
    fs::write(out, svg).map_err(|e| BenchError::io(out, e))?;
    Ok(series)
}

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 500.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 160.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 60.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

pub fn render_svg(series: &[Series], kind: PlotKind) -> String {
    let log = kind.log_scale();
    let tf = |v: f64| if log { v.log10() } else { v };
    let pts = series.iter().flat_map(|s| s.points.iter());
    let (mut x_max, mut y_lo, mut y_hi) = (1.0_f64, f64::INFINITY, f64::NEG_INFINITY);
    for p in pts {
        x_max = x_max.max(p.iter as f64);
        y_lo = y_lo.min(tf(p.value));
        y_hi = y_hi.max(tf(p.value));
    }
    if !y_lo.is_finite() {
        (y_lo, y_hi) = (0.0, 1.0);
    }
    if log {
        y_lo = y_lo.floor();
        y_hi = y_hi.ceil();
    }
    if y_hi - y_lo < 1e-12 {
        y_hi = y_lo + 1.0;
    }
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let sx = |x: f64| LEFT + x / x_max * plot_w;
    let sy = |y: f64| TOP + (y_hi - y) / (y_hi - y_lo) * plot_h;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<rect x="{LEFT}" y="{TOP}" width="{plot_w}" height="{plot_h}" fill="none" stroke="black"/>"#
    );

    let ticks: Vec<f64> = if log {
        let step = ((y_hi - y_lo) / 8.0).ceil().max(1.0);
        let mut t = Vec::new();
        let mut y = y_lo;
        while y <= y_hi + 1e-9 {
            t.push(y);
            y += step;
        }
        t
    } else {
        (0..=5).map(|i| y_lo + (y_hi - y_lo) * i as f64 / 5.0).collect()
    };
    for y in ticks {
        let py = sy(y);
        let label = if log {
            format!("1e{}", y as i64)
        } else {
            format!("{y:.3}")
        };
        let _ = writeln!(
            svg,
            r##"<line x1="{LEFT}" y1="{py:.2}" x2="{:.2}" y2="{py:.2}" stroke="#dddddd"/><text x="{:.2}" y="{:.2}" text-anchor="end">{label}</text>"##,
            LEFT + plot_w,
            LEFT - 6.0,
            py + 4.0
        );
    }
    for i in 0..=5 {
        let x = x_max * i as f64 / 5.0;
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            sx(x),
            TOP + plot_h + 18.0,
            x.round() as i64
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">iteration</text>"#,
        LEFT + plot_w / 2.0,
        HEIGHT - 15.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="18" y="{:.2}" text-anchor="middle" transform="rotate(-90 18 {:.2})">{}</text>"#,
        TOP + plot_h / 2.0,
        TOP + plot_h / 2.0,
        kind.label()
    );

    for (i, s) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let coords: Vec<String> = s
            .points
            .iter()
            .map(|p| format!("{:.2},{:.2}", sx(p.iter as f64), sy(tf(p.value))))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            coords.join(" ")
        );
        let ly = TOP + 20.0 + 20.0 * i as f64;
        let lx = WIDTH - RIGHT + 15.0;
        let _ = writeln!(
            svg,
            r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{}" y="{}">{}</text>"#,
            lx + 25.0,
            lx + 32.0,
            ly + 4.0,
            escape(&s.name)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
