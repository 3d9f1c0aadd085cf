//! SVG rendering of traces: a grid of cells, one letter per cell, each
//! scaled to fit with its aspect ratio kept.

use std::fmt::Write as _;

use super::Trace;

const CELL: f64 = 120.0;
const PAD: f64 = 12.0;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Standalone SVG with `columns` cells per row. Strokes are drawn as
/// separate polylines; the first point of each trace is marked.
pub fn render_traces_svg(traces: &[&Trace], columns: usize) -> String {
    let columns = columns.max(1);
    let rows = traces.len().div_ceil(columns).max(1);
    let (w, h) = (columns as f64 * CELL, rows as f64 * CELL);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    for (i, t) in traces.iter().enumerate() {
        let (ox, oy) = ((i % columns) as f64 * CELL, (i / columns) as f64 * CELL);
        let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for p in &t.points {
            x0 = x0.min(p.x);
            x1 = x1.max(p.x);
            y0 = y0.min(p.y);
            y1 = y1.max(p.y);
        }
        let span = (x1 - x0).max(y1 - y0).max(1e-9);
        let scale = (CELL - 2.0 * PAD - 12.0) / span;
        // y grows upwards in trace space, downwards in SVG.
        let map = |x: f64, y: f64| (ox + PAD + (x - x0) * scale, oy + PAD + (y1 - y) * scale);
        let _ = writeln!(s, r#"<g><title>{} {}</title>"#, escape(&t.writer_id), t.letter);
        for stroke in t.strokes() {
            let pts: Vec<String> = stroke
                .iter()
                .map(|p| {
                    let (x, y) = map(p.x, p.y);
                    format!("{x:.2},{y:.2}")
                })
                .collect();
            let _ = writeln!(
                s,
                r#"<polyline points="{}" fill="none" stroke="black" stroke-width="1.5"/>"#,
                pts.join(" ")
            );
        }
        if let Some(p) = t.points.first() {
            let (x, y) = map(p.x, p.y);
            let _ = writeln!(s, r#"<circle cx="{x:.2}" cy="{y:.2}" r="2.5" fill="red"/>"#);
        }
        let caption = match &t.label {
            Some(l) => format!("{} {} ({})", t.writer_id, t.letter, l),
            None => format!("{} {}", t.writer_id, t.letter),
        };
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="9">{}</text></g>"#,
            ox + 4.0,
            oy + CELL - 4.0,
            escape(&caption)
        );
    }
    s.push_str("</svg>\n");
    s
}
