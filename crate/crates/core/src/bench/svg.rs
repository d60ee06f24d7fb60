//! Static SVG rendering: box plots of relative scores and line plots with
//! optional quartile ribbons.

use std::fmt::Write as _;
use std::path::Path;

use super::{quantile, relative_scores, RunRecord};
use crate::error::{Error, Result};

const W: f64 = 720.0;
const H: f64 = 440.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;
const PALETTE: [&str; 9] = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#17becf"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotKind {
    /// One box per method of the relative scores.
    Box,
    /// Median test R² against training size, with a quartile ribbon.
    Curve,
}

impl PlotKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "box" => Ok(PlotKind::Box),
            "curve" => Ok(PlotKind::Curve),
            other => Err(Error::InvalidParameter(format!("unknown plot kind {other:?} (box|curve)"))),
        }
    }
}

/// A named polyline; `band` holds lower and upper ribbon values.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub band: Option<(Vec<f64>, Vec<f64>)>,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in values.filter(|v| v.is_finite()) {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        return (lo - 0.5, hi + 0.5);
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

struct Frame {
    x: (f64, f64),
    y: (f64, f64),
    log_x: bool,
}

impl Frame {
    fn px(&self, v: f64) -> f64 {
        let (v, a, b) = if self.log_x { (v.log10(), self.x.0.log10(), self.x.1.log10()) } else { (v, self.x.0, self.x.1) };
        LEFT + (v - a) / (b - a) * (W - LEFT - RIGHT)
    }

    fn py(&self, v: f64) -> f64 {
        H - BOTTOM - (v - self.y.0) / (self.y.1 - self.y.0) * (H - TOP - BOTTOM)
    }
}

fn header(out: &mut String, title: &str, y_label: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(out, r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#, (W - RIGHT + LEFT) / 2.0, escape(title));
    let _ = writeln!(
        out,
        r#"<text transform="translate(16 {}) rotate(-90)" text-anchor="middle">{}</text>"#,
        (H - BOTTOM + TOP) / 2.0,
        escape(y_label)
    );
}

fn y_axis(out: &mut String, f: &Frame) {
    let _ = writeln!(out, r#"<line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{}" stroke="black"/>"#, H - BOTTOM);
    for i in 0..=5 {
        let v = f.y.0 + (f.y.1 - f.y.0) * i as f64 / 5.0;
        let y = f.py(v);
        let _ = writeln!(out, r##"<line x1="{}" y1="{y:.2}" x2="{}" y2="{y:.2}" stroke="#ddd"/>"##, LEFT, W - RIGHT);
        let _ = writeln!(out, r#"<text x="{}" y="{:.2}" text-anchor="end">{v:.3}</text>"#, LEFT - 6.0, y + 4.0);
    }
}

/// Line plot of several series sharing axes.
pub fn render_curves(title: &str, x_label: &str, y_label: &str, series: &[Series], log_x: bool) -> String {
    let xs = series.iter().flat_map(|s| s.x.iter().copied());
    let (mut x0, mut x1) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in xs {
        x0 = x0.min(v);
        x1 = x1.max(v);
    }
    if !(x0.is_finite() && x1 > x0) {
        (x0, x1) = (x0.min(0.0), x0.max(0.0) + 1.0);
    }
    let log_x = log_x && x0 > 0.0;
    let ys = series.iter().flat_map(|s| {
        let band = s.band.iter().flat_map(|(lo, hi)| lo.iter().chain(hi.iter()).copied());
        s.y.iter().copied().chain(band)
    });
    let f = Frame { x: (x0, x1), y: range(ys), log_x };
    let mut out = String::new();
    header(&mut out, title, y_label);
    y_axis(&mut out, &f);
    let _ = writeln!(out, r#"<line x1="{LEFT}" y1="{0}" x2="{1}" y2="{0}" stroke="black"/>"#, H - BOTTOM, W - RIGHT);
    let mut ticks: Vec<f64> = series.iter().flat_map(|s| s.x.iter().copied()).collect();
    ticks.sort_by(f64::total_cmp);
    ticks.dedup();
    if ticks.len() > 12 {
        ticks = (0..=6).map(|i| x0 + (x1 - x0) * i as f64 / 6.0).collect();
    }
    for t in ticks {
        let _ = writeln!(out, r#"<text x="{:.2}" y="{}" text-anchor="middle">{}</text>"#, f.px(t), H - BOTTOM + 18.0, t);
    }
    let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, (W - RIGHT + LEFT) / 2.0, H - 16.0, escape(x_label));
    for (k, s) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        if let Some((lo, hi)) = &s.band {
            let mut pts: Vec<String> = s.x.iter().zip(hi).map(|(&x, &y)| format!("{:.2},{:.2}", f.px(x), f.py(y))).collect();
            pts.extend(s.x.iter().zip(lo).rev().map(|(&x, &y)| format!("{:.2},{:.2}", f.px(x), f.py(y))));
            let _ = writeln!(out, r#"<polygon points="{}" fill="{color}" fill-opacity="0.2" stroke="none"/>"#, pts.join(" "));
        }
        let pts: Vec<String> =
            s.x.iter().zip(&s.y).filter(|(_, y)| y.is_finite()).map(|(&x, &y)| format!("{:.2},{:.2}", f.px(x), f.py(y))).collect();
        let _ = writeln!(out, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#, pts.join(" "));
        let ly = TOP + 18.0 * k as f64;
        let _ = writeln!(
            out,
            r#"<line x1="{0}" y1="{ly}" x2="{1}" y2="{ly}" stroke="{color}" stroke-width="3"/>"#,
            W - RIGHT + 12.0,
            W - RIGHT + 32.0
        );
        let _ = writeln!(out, r#"<text x="{}" y="{}">{}</text>"#, W - RIGHT + 38.0, ly + 4.0, escape(&s.name));
    }
    out.push_str("</svg>\n");
    out
}

/// Box plot with whiskers at the extreme values.
pub fn render_box(title: &str, y_label: &str, groups: &[(String, Vec<f64>)]) -> String {
    let f = Frame { x: (0.0, groups.len().max(1) as f64), y: range(groups.iter().flat_map(|g| g.1.iter().copied())), log_x: false };
    let mut out = String::new();
    header(&mut out, title, y_label);
    y_axis(&mut out, &f);
    let slot = (W - LEFT - RIGHT) / groups.len().max(1) as f64;
    for (k, (name, v)) in groups.iter().enumerate() {
        if v.is_empty() {
            continue;
        }
        let color = PALETTE[k % PALETTE.len()];
        let cx = LEFT + slot * (k as f64 + 0.5);
        let half = 0.3 * slot;
        let [lo, q1, med, q3, hi] = [0.0, 0.25, 0.5, 0.75, 1.0].map(|q| f.py(quantile(v, q)));
        let _ = writeln!(out, r#"<line x1="{cx:.2}" y1="{lo:.2}" x2="{cx:.2}" y2="{hi:.2}" stroke="black"/>"#);
        let _ = writeln!(
            out,
            r#"<rect x="{:.2}" y="{q3:.2}" width="{:.2}" height="{:.2}" fill="{color}" fill-opacity="0.6" stroke="black"/>"#,
            cx - half,
            2.0 * half,
            (q1 - q3).max(0.5)
        );
        let _ = writeln!(
            out,
            r#"<line x1="{:.2}" y1="{med:.2}" x2="{:.2}" y2="{med:.2}" stroke="black" stroke-width="2"/>"#,
            cx - half,
            cx + half
        );
        let _ = writeln!(
            out,
            r#"<text transform="translate({cx:.2} {}) rotate(30)" font-size="11">{}</text>"#,
            H - BOTTOM + 14.0,
            escape(name)
        );
    }
    out.push_str("</svg>\n");
    out
}

fn methods_in_order(records: &[RunRecord]) -> Vec<String> {
    let mut names: Vec<String> = Vec::new();
    for r in records {
        if !names.contains(&r.method) {
            names.push(r.method.clone());
        }
    }
    names
}

/// Renders records to an SVG file.
pub fn emit_svg(records: &[RunRecord], path: impl AsRef<Path>, kind: PlotKind) -> Result<()> {
    if records.is_empty() {
        return Err(Error::Empty("no records to plot".into()));
    }
    let title = format!("{} / {} / {} p={}", records[0].model, records[0].pattern, records[0].learner, records[0].p);
    let svg = match kind {
        PlotKind::Box => {
            let rel = relative_scores(records)?;
            let groups: Vec<(String, Vec<f64>)> = methods_in_order(&rel)
                .into_iter()
                .map(|m| {
                    let v = rel.iter().filter(|r| r.method == m).map(|r| r.r2).collect();
                    (m, v)
                })
                .collect();
            render_box(&title, "relative explained variance", &groups)
        }
        PlotKind::Curve => {
            let series: Vec<Series> = methods_in_order(records)
                .into_iter()
                .map(|m| {
                    let mut ns: Vec<usize> = records.iter().filter(|r| r.method == m).map(|r| r.n_train).collect();
                    ns.sort_unstable();
                    ns.dedup();
                    let at = |n: usize| -> Vec<f64> { records.iter().filter(|r| r.method == m && r.n_train == n).map(|r| r.r2).collect() };
                    Series {
                        x: ns.iter().map(|&n| n as f64).collect(),
                        y: ns.iter().map(|&n| quantile(&at(n), 0.5)).collect(),
                        band: Some((
                            ns.iter().map(|&n| quantile(&at(n), 0.25)).collect(),
                            ns.iter().map(|&n| quantile(&at(n), 0.75)).collect(),
                        )),
                        name: m,
                    }
                })
                .collect();
            let lo = records.iter().map(|r| r.n_train).min().unwrap_or(1).max(1);
            let hi = records.iter().map(|r| r.n_train).max().unwrap_or(1);
            render_curves(&title, "training size", "test R²", &series, hi >= 10 * lo)
        }
    };
    std::fs::write(path, svg)?;
    Ok(())
}
