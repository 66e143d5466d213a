//! Minimal scatter plots as standalone SVG.

use std::fmt::Write as _;
use std::path::Path;

use tooldse_core::dse::{Evaluation, Objective, TraceRecord, REFERENCE};

use crate::failure::Failure;

const W: f64 = 640.0;
const H: f64 = 420.0;
const PAD: f64 = 56.0;

struct Point {
    x: f64,
    y: f64,
    color: &'static str,
    r: f64,
}

fn range(vals: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-9 {
        return (lo - 0.5, hi + 0.5);
    }
    let m = (hi - lo) * 0.05;
    (lo - m, hi + m)
}

fn render(title: &str, xlabel: &str, ylabel: &str, points: &[Point]) -> String {
    let (x0, x1) = range(points.iter().map(|p| p.x));
    let (y0, y1) = range(points.iter().map(|p| p.y));
    let sx = |x: f64| PAD + (x - x0) / (x1 - x0) * (W - 2.0 * PAD);
    let sy = |y: f64| H - PAD - (y - y0) / (y1 - y0) * (H - 2.0 * PAD);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{title}</text>"#, W / 2.0);
    let _ = writeln!(
        s,
        r#"<rect x="{PAD}" y="{PAD}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        W - 2.0 * PAD,
        H - 2.0 * PAD
    );
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{xlabel}</text>"#, W / 2.0, H - 12.0);
    let _ = writeln!(
        s,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{ylabel}</text>"#,
        H / 2.0,
        H / 2.0
    );
    for (v, anchor, x, y) in [
        (x0, "start", PAD, H - PAD + 16.0),
        (x1, "end", W - PAD, H - PAD + 16.0),
    ] {
        let _ = writeln!(s, r#"<text x="{x}" y="{y}" text-anchor="{anchor}">{v:.2}</text>"#);
    }
    for (v, y) in [(y0, H - PAD), (y1, PAD + 10.0)] {
        let _ = writeln!(s, r#"<text x="{}" y="{y}" text-anchor="end">{v:.2}</text>"#, PAD - 4.0);
    }
    if y0 < 0.0 && y1 > 0.0 {
        let _ = writeln!(
            s,
            r#"<line x1="{PAD}" x2="{}" y1="{:.2}" y2="{:.2}" stroke="grey" stroke-dasharray="4 3"/>"#,
            W - PAD,
            sy(0.0),
            sy(0.0)
        );
    }
    for p in points {
        let _ = writeln!(
            s,
            r#"<circle cx="{:.2}" cy="{:.2}" r="{}" fill="{}" fill-opacity="0.8"/>"#,
            sx(p.x),
            sy(p.y),
            p.r,
            p.color
        );
    }
    s.push_str("</svg>\n");
    s
}

fn write(path: &Path, text: String) -> Result<(), Failure> {
    std::fs::write(path, text).map_err(|e| Failure::io(path, e))
}

/// Objective of every trace record against its position in the trace.
pub fn write_dse(path: &Path, trace: &[TraceRecord]) -> Result<(), Failure> {
    let points: Vec<Point> = trace
        .iter()
        .enumerate()
        .filter_map(|(i, r)| {
            let (color, radius) = match (r.tool == REFERENCE, r.accepted) {
                (true, _) => ("black", 5.0),
                (false, true) => ("#d62728", 4.0),
                (false, false) => ("#1f77b4", 3.0),
            };
            Some(Point {
                x: i as f64,
                y: r.objective?,
                color,
                r: radius,
            })
        })
        .collect();
    write(path, render("Search trace", "evaluation", "BDDE (%)", &points))
}

/// BDR against objective for every evaluated profile, Pareto front in red.
pub fn write_pareto(path: &Path, evals: &[Evaluation], front: &[Evaluation], objective: Objective) -> Result<(), Failure> {
    let ids: std::collections::HashSet<String> = front.iter().map(|e| e.id()).collect();
    let points: Vec<Point> = evals
        .iter()
        .filter_map(|e| {
            let on = ids.contains(&e.id());
            Some(Point {
                x: e.bdr(objective)?,
                y: e.objective(objective)?,
                color: if on { "#d62728" } else { "#7f7f7f" },
                r: if on { 4.0 } else { 3.0 },
            })
        })
        .collect();
    write(path, render("Evaluated profiles", "BDR (%)", "BDDE (%)", &points))
}
