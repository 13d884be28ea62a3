//! Minimal SVG polyline chart (fixed 800x600 viewBox) for the angle-sweep
//! figure. Output is deterministic.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::io::metrics_csv::format_sig6;

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 600.0;
const MARGIN_LEFT: f64 = 90.0;
const MARGIN_RIGHT: f64 = 30.0;
const MARGIN_TOP: f64 = 40.0;
const MARGIN_BOTTOM: f64 = 70.0;

/// Write a single-series line chart. Points with non-finite y are skipped
/// (they break the polyline into segments).
pub fn write_line_chart(
    points: &[(f64, f64)],
    x_label: &str,
    y_label: &str,
    title: &str,
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    let finite: Vec<(f64, f64)> = points
        .iter()
        .copied()
        .filter(|(x, y)| x.is_finite() && y.is_finite())
        .collect();
    let (x_lo, x_hi) = finite
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (x, _)| {
            (lo.min(*x), hi.max(*x))
        });
    let (y_lo, y_hi) = finite
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (_, y)| {
            (lo.min(*y), hi.max(*y))
        });
    let (x_lo, x_hi) = pad_range(x_lo, x_hi);
    let (y_lo, y_hi) = pad_range(y_lo, y_hi);

    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let sx = |x: f64| MARGIN_LEFT + (x - x_lo) / (x_hi - x_lo) * plot_w;
    let sy = |y: f64| HEIGHT - MARGIN_BOTTOM - (y - y_lo) / (y_hi - y_lo) * plot_h;

    let mut out = Vec::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 800 600">"#
    );
    let _ = writeln!(out, r#"<rect width="800" height="600" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="400" y="24" text-anchor="middle" font-size="18" font-family="sans-serif">{}</text>"#,
        xml_escape(title)
    );
    // Axes.
    let _ = writeln!(
        out,
        r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="black"/>"#,
        MARGIN_LEFT,
        HEIGHT - MARGIN_BOTTOM,
        WIDTH - MARGIN_RIGHT,
        HEIGHT - MARGIN_BOTTOM
    );
    let _ = writeln!(
        out,
        r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="black"/>"#,
        MARGIN_LEFT, MARGIN_TOP, MARGIN_LEFT, HEIGHT - MARGIN_BOTTOM
    );
    // Ticks.
    for k in 0..=4 {
        let t = k as f64 / 4.0;
        let xv = x_lo + t * (x_hi - x_lo);
        let yv = y_lo + t * (y_hi - y_lo);
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-size="12" font-family="sans-serif">{}</text>"#,
            sx(xv),
            HEIGHT - MARGIN_BOTTOM + 20.0,
            format_sig6(xv)
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end" font-size="12" font-family="sans-serif">{}</text>"#,
            MARGIN_LEFT - 8.0,
            sy(yv) + 4.0,
            format_sig6(yv)
        );
        let _ = writeln!(
            out,
            r##"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="#cccccc"/>"##,
            MARGIN_LEFT,
            sy(yv),
            WIDTH - MARGIN_RIGHT,
            sy(yv)
        );
    }
    // Axis labels.
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-size="14" font-family="sans-serif">{}</text>"#,
        MARGIN_LEFT + plot_w / 2.0,
        HEIGHT - 20.0,
        xml_escape(x_label)
    );
    let _ = writeln!(
        out,
        r#"<text x="20" y="{:.2}" text-anchor="middle" font-size="14" font-family="sans-serif" transform="rotate(-90 20 {:.2})">{}</text>"#,
        MARGIN_TOP + plot_h / 2.0,
        MARGIN_TOP + plot_h / 2.0,
        xml_escape(y_label)
    );
    // Polyline segments (split at non-finite values).
    let mut segment: Vec<String> = Vec::new();
    let flush = |segment: &mut Vec<String>, out: &mut Vec<u8>| {
        if segment.len() >= 2 {
            let _ = writeln!(
                out,
                r##"<polyline fill="none" stroke="#1f6fb2" stroke-width="2" points="{}"/>"##,
                segment.join(" ")
            );
        }
        segment.clear();
    };
    for (x, y) in points {
        if x.is_finite() && y.is_finite() {
            segment.push(format!("{:.2},{:.2}", sx(*x), sy(*y)));
        } else {
            flush(&mut segment, &mut out);
        }
    }
    flush(&mut segment, &mut out);
    // Markers.
    for (x, y) in &finite {
        let _ = writeln!(
            out,
            r##"<circle cx="{:.2}" cy="{:.2}" r="4" fill="#1f6fb2"/>"##,
            sx(*x),
            sy(*y)
        );
    }
    let _ = writeln!(out, "</svg>");
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

fn pad_range(lo: f64, hi: f64) -> (f64, f64) {
    if !lo.is_finite() || !hi.is_finite() {
        return (0.0, 1.0);
    }
    if lo == hi {
        return (lo - 0.5, hi + 0.5);
    }
    let pad = (hi - lo) * 0.05;
    (lo - pad, hi + pad)
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
