//! Minimal SVG line charts for progression curves.

use std::fmt::Write as _;

use super::ProgressionCurve;

const W: f64 = 640.0;
const H: f64 = 400.0;
const PAD: f64 = 48.0;
const COLORS: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
];

/// Validation score (percent) against cycle, one polyline per series. Dashed
/// lines show the best score so far.
pub fn progression_svg(title: &str, series: &[(String, ProgressionCurve)]) -> String {
    let max_cycle = series
        .iter()
        .flat_map(|(_, c)| c.points.iter().map(|p| p.0))
        .max()
        .unwrap_or(1)
        .max(1) as f64;
    let x =
        |cycle: f64| PAD + (cycle - 1.0).max(0.0) / (max_cycle - 1.0).max(1.0) * (W - 2.0 * PAD);
    let y = |score: f64| H - PAD - score.clamp(0.0, 1.0) * (H - 2.0 * PAD);
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="20" text-anchor="middle">{}</text>"#,
        W / 2.0,
        escape(title)
    );
    for pct in [0, 25, 50, 75, 100] {
        let yy = y(pct as f64 / 100.0);
        let _ = writeln!(
            svg,
            "<line x1=\"{PAD}\" y1=\"{yy}\" x2=\"{}\" y2=\"{yy}\" stroke=\"#ddd\"/><text x=\"{}\" y=\"{}\" text-anchor=\"end\">{pct}</text>",
            W - PAD,
            PAD - 6.0,
            yy + 4.0
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle">cycle</text>"#,
        W / 2.0,
        H - 12.0
    );
    for (i, (label, curve)) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let line = |values: &mut dyn Iterator<Item = (usize, f64)>| {
            values
                .map(|(c, s)| format!("{:.1},{:.1}", x(c as f64), y(s)))
                .collect::<Vec<_>>()
                .join(" ")
        };
        let raw = line(&mut curve.points.iter().copied());
        let best = line(
            &mut curve
                .points
                .iter()
                .map(|p| p.0)
                .zip(curve.best_so_far.iter().copied()),
        );
        let _ = writeln!(
            svg,
            r#"<polyline points="{raw}" fill="none" stroke="{color}" stroke-width="2"/>"#
        );
        let _ = writeln!(
            svg,
            r#"<polyline points="{best}" fill="none" stroke="{color}" stroke-dasharray="4 3"/>"#
        );
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" fill="{color}">{}</text>"#,
            PAD + 8.0,
            PAD + 14.0 * (i as f64 + 1.0),
            escape(label)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}
