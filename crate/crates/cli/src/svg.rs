//! Minimal deterministic SVG plots.

use std::fmt::Write;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
const COLORS: [&str; 6] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b",
];

/// One refinement history on the convergence plot.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceSeries {
    pub label: String,
    pub cells: Vec<f64>,
    pub error: Vec<f64>,
    pub estimate: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationSeries {
    pub label: String,
    pub levels: Vec<f64>,
    pub iterations: Vec<f64>,
}

struct Axis {
    lo: f64,
    hi: f64,
    log: bool,
}

impl Axis {
    fn fit(values: impl Iterator<Item = f64>, log: bool) -> Self {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for v in values.filter(|v| v.is_finite() && (!log || *v > 0.0)) {
            let v = if log { v.log10() } else { v };
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if !lo.is_finite() {
            (lo, hi) = (0.0, 1.0);
        }
        if log {
            lo = lo.floor();
            hi = hi.ceil();
        }
        if hi - lo < 1e-12 {
            lo -= 1.0;
            hi += 1.0;
        }
        Self { lo, hi, log }
    }

    fn frac(&self, v: f64) -> Option<f64> {
        if !v.is_finite() || (self.log && v <= 0.0) {
            return None;
        }
        let v = if self.log { v.log10() } else { v };
        Some((v - self.lo) / (self.hi - self.lo))
    }

    fn ticks(&self) -> Vec<(f64, String)> {
        if self.log {
            (self.lo as i64..=self.hi as i64)
                .map(|e| ((e as f64 - self.lo) / (self.hi - self.lo), format!("1e{e}")))
                .collect()
        } else {
            let span = self.hi - self.lo;
            let step = nice_step(span / 6.0);
            let first = (self.lo / step).ceil() as i64;
            let last = (self.hi / step).floor() as i64;
            (first..=last)
                .map(|k| {
                    let v = k as f64 * step;
                    ((v - self.lo) / span, format!("{}", round_label(v)))
                })
                .collect()
        }
    }
}

fn nice_step(raw: f64) -> f64 {
    let mag = 10f64.powf(raw.log10().floor());
    let r = raw / mag;
    let nice = if r <= 1.0 {
        1.0
    } else if r <= 2.0 {
        2.0
    } else if r <= 5.0 {
        5.0
    } else {
        10.0
    };
    nice * mag
}

fn round_label(v: f64) -> f64 {
    (v * 1e6).round() / 1e6
}

struct Frame {
    x: Axis,
    y: Axis,
}

impl Frame {
    fn px(&self, v: f64) -> Option<f64> {
        self.x.frac(v).map(|f| LEFT + f * (WIDTH - LEFT - RIGHT))
    }

    fn py(&self, v: f64) -> Option<f64> {
        self.y
            .frac(v)
            .map(|f| HEIGHT - BOTTOM - f * (HEIGHT - TOP - BOTTOM))
    }

    fn draw(&self, out: &mut String, title: &str, xlabel: &str, ylabel: &str) {
        let (x0, x1) = (LEFT, WIDTH - RIGHT);
        let (y0, y1) = (HEIGHT - BOTTOM, TOP);
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
            (x0 + x1) / 2.0,
            escape(title)
        );
        let _ = writeln!(
            out,
            r##"<rect x="{x0:.2}" y="{y1:.2}" width="{:.2}" height="{:.2}" fill="none" stroke="#000"/>"##,
            x1 - x0,
            y0 - y1
        );
        for (f, label) in self.x.ticks() {
            let x = x0 + f * (x1 - x0);
            let _ = writeln!(
                out,
                r##"<line x1="{x:.2}" y1="{y0:.2}" x2="{x:.2}" y2="{:.2}" stroke="#000"/><text x="{x:.2}" y="{:.2}" text-anchor="middle" font-size="11">{label}</text>"##,
                y0 + 5.0,
                y0 + 18.0
            );
        }
        for (f, label) in self.y.ticks() {
            let y = y0 - f * (y0 - y1);
            let _ = writeln!(
                out,
                r##"<line x1="{:.2}" y1="{y:.2}" x2="{x0:.2}" y2="{y:.2}" stroke="#000"/><text x="{:.2}" y="{:.2}" text-anchor="end" font-size="11">{label}</text>"##,
                x0 - 5.0,
                x0 - 8.0,
                y + 4.0
            );
        }
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-size="12">{}</text>"#,
            (x0 + x1) / 2.0,
            HEIGHT - 12.0,
            escape(xlabel)
        );
        let _ = writeln!(
            out,
            r#"<text x="16" y="{:.2}" text-anchor="middle" font-size="12" transform="rotate(-90 16 {:.2})">{}</text>"#,
            (y0 + y1) / 2.0,
            (y0 + y1) / 2.0,
            escape(ylabel)
        );
    }

    fn polyline(&self, out: &mut String, xs: &[f64], ys: &[f64], color: &str, dashed: bool) {
        let points: Vec<String> = xs
            .iter()
            .zip(ys)
            .filter_map(|(&x, &y)| Some(format!("{:.2},{:.2}", self.px(x)?, self.py(y)?)))
            .collect();
        if points.is_empty() {
            return;
        }
        let dash = if dashed {
            r#" stroke-dasharray="6,4""#
        } else {
            ""
        };
        let _ = writeln!(
            out,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"{dash}/>"#,
            points.join(" ")
        );
        for p in &points {
            let (x, y) = p.split_once(',').unwrap();
            let _ = writeln!(out, r#"<circle cx="{x}" cy="{y}" r="2.5" fill="{color}"/>"#);
        }
    }
}

fn legend(out: &mut String, row: usize, label: &str, color: &str, dashed: bool) {
    let x = WIDTH - RIGHT + 12.0;
    let y = TOP + 10.0 + 18.0 * row as f64;
    let dash = if dashed {
        r#" stroke-dasharray="6,4""#
    } else {
        ""
    };
    let _ = writeln!(
        out,
        r#"<line x1="{x:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="{color}" stroke-width="1.5"{dash}/><text x="{:.2}" y="{:.2}" font-size="11">{}</text>"#,
        x + 24.0,
        x + 30.0,
        y + 4.0,
        escape(label)
    );
}

fn header() -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\" font-family=\"sans-serif\">\n<rect width=\"100%\" height=\"100%\" fill=\"#fff\"/>\n"
    )
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

/// Log-log plot of goal error (solid) and estimate (dashed) against the
/// total number of cells.
pub fn convergence_svg(title: &str, series: &[ConvergenceSeries]) -> String {
    let frame = Frame {
        x: Axis::fit(series.iter().flat_map(|s| s.cells.iter().copied()), true),
        y: Axis::fit(
            series
                .iter()
                .flat_map(|s| s.error.iter().chain(&s.estimate).copied()),
            true,
        ),
    };
    let mut out = header();
    frame.draw(
        &mut out,
        title,
        "total cells N",
        "|J error| (solid), estimate (dashed)",
    );
    for (k, s) in series.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        frame.polyline(&mut out, &s.cells, &s.error, color, false);
        frame.polyline(&mut out, &s.cells, &s.estimate, color, true);
        legend(&mut out, 2 * k, &format!("{} error", s.label), color, false);
        legend(
            &mut out,
            2 * k + 1,
            &format!("{} estimate", s.label),
            color,
            true,
        );
    }
    out.push_str("</svg>\n");
    out
}

/// Iterations per refinement level.
pub fn iterations_svg(title: &str, series: &[IterationSeries]) -> String {
    let frame = Frame {
        x: Axis::fit(series.iter().flat_map(|s| s.levels.iter().copied()), false),
        y: Axis::fit(
            series
                .iter()
                .flat_map(|s| s.iterations.iter().copied())
                .chain([0.0]),
            false,
        ),
    };
    let mut out = header();
    frame.draw(&mut out, title, "refinement level", "iterations K");
    for (k, s) in series.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        frame.polyline(&mut out, &s.levels, &s.iterations, color, false);
        legend(&mut out, k, &s.label, color, false);
    }
    out.push_str("</svg>\n");
    out
}

/// One row of breakpoint markers per component.
pub fn mesh_svg(title: &str, nodes: &[Vec<f64>]) -> String {
    let t0 = nodes
        .iter()
        .filter_map(|g| g.first())
        .fold(f64::INFINITY, |a, &b| a.min(b));
    let tn = nodes
        .iter()
        .filter_map(|g| g.last())
        .fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let rows = nodes.len().max(1) as f64;
    let frame = Frame {
        x: Axis::fit([t0, tn].into_iter(), false),
        y: Axis {
            lo: 0.0,
            hi: rows,
            log: false,
        },
    };
    let mut out = header();
    frame.draw(&mut out, title, "t", "component");
    for (i, grid) in nodes.iter().enumerate() {
        let yc = frame.py(rows - i as f64 - 0.5).unwrap();
        let color = COLORS[i % COLORS.len()];
        let _ = writeln!(
            out,
            r##"<text x="{:.2}" y="{:.2}" font-size="11">u{} ({} cells)</text>"##,
            WIDTH - RIGHT + 12.0,
            yc + 4.0,
            i + 1,
            grid.len().saturating_sub(1)
        );
        for &t in grid {
            if let Some(x) = frame.px(t) {
                let _ = writeln!(
                    out,
                    r#"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="{color}" stroke-width="0.6"/>"#,
                    yc - 12.0,
                    yc + 12.0
                );
            }
        }
    }
    out.push_str("</svg>\n");
    out
}
