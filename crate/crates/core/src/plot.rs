//! Standalone SVG scatter plots.

use std::fmt::Write;

use thiserror::Error;

use crate::stats::pearson_r;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlotError {
    #[error("x and y have different lengths ({0} and {1})")]
    LengthMismatch(usize, usize),
    #[error("nothing to plot")]
    Empty,
    #[error("non-finite value in plot data")]
    NonFinite,
}

const WIDTH: f64 = 480.0;
const HEIGHT: f64 = 360.0;
const MARGIN: f64 = 56.0;

fn padded_range(v: &[f64]) -> (f64, f64) {
    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi - lo < 1e-12 {
        (lo - 1.0, hi + 1.0)
    } else {
        let pad = (hi - lo) * 0.05;
        (lo - pad, hi + pad)
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Least-squares `(slope, intercept)`, or `None` when x is constant.
pub fn least_squares(x: &[f64], y: &[f64]) -> Option<(f64, f64)> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    Some((slope, my - slope * mx))
}

/// Scatter plot with axes, one `<circle class="point">` per observation,
/// a least-squares line and the correlation coefficient when defined.
pub fn scatter_svg(x: &[f64], y: &[f64], x_label: &str, y_label: &str) -> Result<String, PlotError> {
    if x.len() != y.len() {
        return Err(PlotError::LengthMismatch(x.len(), y.len()));
    }
    if x.is_empty() {
        return Err(PlotError::Empty);
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(PlotError::NonFinite);
    }
    let (x0, x1) = padded_range(x);
    let (y0, y1) = padded_range(y);
    let px = |v: f64| MARGIN + (v - x0) / (x1 - x0) * (WIDTH - 2.0 * MARGIN);
    let py = |v: f64| HEIGHT - MARGIN - (v - y0) / (y1 - y0) * (HEIGHT - 2.0 * MARGIN);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let (left, right, top, bottom) = (MARGIN, WIDTH - MARGIN, MARGIN, HEIGHT - MARGIN);
    let _ = writeln!(
        svg,
        r#"<g class="axes" stroke="black"><line x1="{left}" y1="{bottom}" x2="{right}" y2="{bottom}"/><line x1="{left}" y1="{top}" x2="{left}" y2="{bottom}"/></g>"#
    );
    for k in 0..=4 {
        let t = k as f64 / 4.0;
        let (vx, vy) = (x0 + t * (x1 - x0), y0 + t * (y1 - y0));
        let _ = writeln!(
            svg,
            r#"<text class="tick" x="{:.2}" y="{:.2}" text-anchor="middle">{vx:.3}</text>"#,
            px(vx),
            bottom + 16.0
        );
        let _ = writeln!(
            svg,
            r#"<text class="tick" x="{:.2}" y="{:.2}" text-anchor="end">{vy:.3}</text>"#,
            left - 6.0,
            py(vy) + 4.0
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        WIDTH / 2.0,
        HEIGHT - 12.0,
        escape(x_label)
    );
    let _ = writeln!(
        svg,
        r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">{}</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0,
        escape(y_label)
    );
    for (a, b) in x.iter().zip(y) {
        let _ = writeln!(
            svg,
            r#"<circle class="point" cx="{:.2}" cy="{:.2}" r="4" fill="steelblue" fill-opacity="0.7"/>"#,
            px(*a),
            py(*b)
        );
    }
    if let Some((slope, intercept)) = least_squares(x, y) {
        let _ = writeln!(
            svg,
            r#"<line class="fit" x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="firebrick" stroke-width="2"/>"#,
            px(x0),
            py(slope * x0 + intercept),
            px(x1),
            py(slope * x1 + intercept)
        );
    }
    if let Ok(r) = pearson_r(x, y) {
        let _ = writeln!(
            svg,
            r#"<text class="annotation" x="{:.2}" y="{:.2}" text-anchor="end">r = {r:.3}</text>"#,
            right,
            top - 12.0
        );
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}
