//! Minimal SVG line plots over aggregate curves. Rendering is a convenience
//! layer only; every check in the workspace reads CSVs, never images.

use std::fmt::Write as FmtWrite;
use std::path::Path;

use crate::error::Result;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 52.0;
const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
];

pub struct Series<'a> {
    pub label: &'a str,
    /// (x, y, half-band) points; the band draws a shaded +/- region.
    pub points: Vec<(f64, f64, f64)>,
}

fn nice_range(lo: f64, hi: f64) -> (f64, f64) {
    if !lo.is_finite() || !hi.is_finite() {
        return (0.0, 1.0);
    }
    let span = (hi - lo).abs().max(1e-9);
    (lo - 0.05 * span, hi + 0.05 * span)
}

/// Writes one SVG with a polyline and a standard-error band per series.
pub fn write_line_plot(path: &Path, title: &str, series: &[Series<'_>]) -> Result<()> {
    let xs = series
        .iter()
        .flat_map(|s| s.points.iter().map(|p| p.0))
        .collect::<Vec<_>>();
    let ys = series
        .iter()
        .flat_map(|s| s.points.iter().flat_map(|p| [p.1 - p.2, p.1 + p.2]))
        .collect::<Vec<_>>();
    let (x_lo, x_hi) = nice_range(
        xs.iter().cloned().fold(f64::INFINITY, f64::min),
        xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
    );
    let (y_lo, y_hi) = nice_range(
        ys.iter().cloned().fold(f64::INFINITY, f64::min),
        ys.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
    );
    let sx = |x: f64| MARGIN + (x - x_lo) / (x_hi - x_lo) * (WIDTH - 2.0 * MARGIN);
    let sy = |y: f64| HEIGHT - MARGIN - (y - y_lo) / (y_hi - y_lo) * (HEIGHT - 2.0 * MARGIN);

    let mut svg = String::new();
    let _ = write!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" font-family="monospace" font-size="12">"#
    );
    let _ = write!(
        svg,
        r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/><text x="{}" y="20" text-anchor="middle" font-size="14">{title}</text>"#,
        WIDTH / 2.0
    );
    // Axes with end labels.
    let _ = write!(
        svg,
        r#"<line x1="{m}" y1="{b}" x2="{r}" y2="{b}" stroke="black"/><line x1="{m}" y1="{t}" x2="{m}" y2="{b}" stroke="black"/>"#,
        m = MARGIN,
        r = WIDTH - MARGIN,
        t = MARGIN,
        b = HEIGHT - MARGIN
    );
    for (v, x, y, anchor) in [
        (x_lo, sx(x_lo), HEIGHT - MARGIN + 16.0, "middle"),
        (x_hi, sx(x_hi), HEIGHT - MARGIN + 16.0, "middle"),
        (y_lo, MARGIN - 6.0, sy(y_lo) + 4.0, "end"),
        (y_hi, MARGIN - 6.0, sy(y_hi) + 4.0, "end"),
    ] {
        let _ = write!(
            svg,
            r#"<text x="{x:.1}" y="{y:.1}" text-anchor="{anchor}">{v:.2}</text>"#
        );
    }
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        if s.points.iter().any(|p| p.2 > 0.0) {
            let mut band = String::new();
            for p in &s.points {
                let _ = write!(band, "{:.1},{:.1} ", sx(p.0), sy(p.1 + p.2));
            }
            for p in s.points.iter().rev() {
                let _ = write!(band, "{:.1},{:.1} ", sx(p.0), sy(p.1 - p.2));
            }
            let _ = write!(
                svg,
                r#"<polygon points="{}" fill="{color}" opacity="0.15"/>"#,
                band.trim_end()
            );
        }
        let line = s
            .points
            .iter()
            .map(|p| format!("{:.1},{:.1}", sx(p.0), sy(p.1)))
            .collect::<Vec<_>>()
            .join(" ");
        let _ = write!(
            svg,
            r#"<polyline points="{line}" fill="none" stroke="{color}" stroke-width="1.5"/>"#
        );
        let ly = MARGIN + 14.0 * i as f64;
        let _ = write!(
            svg,
            r#"<line x1="{x}" y1="{ly}" x2="{x2}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{tx}" y="{ty}">{label}</text>"#,
            x = WIDTH - MARGIN - 150.0,
            x2 = WIDTH - MARGIN - 130.0,
            tx = WIDTH - MARGIN - 124.0,
            ty = ly + 4.0,
            label = s.label
        );
    }
    svg.push_str("</svg>");
    std::fs::write(path, svg)?;
    Ok(())
}
