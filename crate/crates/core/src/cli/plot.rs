use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::vnratio::{fit_points, FitResult};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const MARGIN: f64 = 64.0;
const TICKS: usize = 5;

/// A rendered scatter plot.
#[derive(Debug, Clone)]
pub struct Plot {
    pub svg: String,
    /// Plotted coordinates (logarithms when `loglog`).
    pub points: Vec<(f64, f64)>,
    pub fit: Option<FitResult>,
}

fn column(headers: &csv::StringRecord, name: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| Error::validation(format!("CSV has no column `{name}`")))
}

/// Reads `(x, y)` pairs from a CSV. Rows where either cell is empty or not
/// a number (such as sweep error rows) are skipped.
pub fn read_xy(path: &Path, x: &str, y: &str) -> Result<Vec<(f64, f64)>> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    let (xi, yi) = (column(&headers, x)?, column(&headers, y)?);
    let mut out = Vec::new();
    for row in reader.records() {
        let row = row?;
        let parse = |i: usize| row.get(i).and_then(|s| s.trim().parse::<f64>().ok());
        if let (Some(a), Some(b)) = (parse(xi), parse(yi)) {
            out.push((a, b));
        }
    }
    Ok(out)
}

fn fmt_tick(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e4 || v.abs() < 1e-2) {
        format!("{v:.2e}")
    } else {
        format!("{v:.3}")
    }
}

fn padded_range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    let pad = if hi > lo { 0.05 * (hi - lo) } else { 0.5 };
    (lo - pad, hi + pad)
}

/// Scatter of `y` against `x`, with a least-squares line and its slope when
/// the points have at least two distinct `x` values. Output bytes depend only
/// on the input.
pub fn render(path: &Path, x: &str, y: &str, loglog: bool) -> Result<Plot> {
    let raw = read_xy(path, x, y)?;
    if raw.len() < 2 {
        return Err(Error::validation(format!(
            "a plot needs at least 2 rows with numeric `{x}` and `{y}`, found {}",
            raw.len()
        )));
    }
    let points: Vec<(f64, f64)> = if loglog {
        if raw.iter().any(|&(a, b)| a <= 0.0 || b <= 0.0) {
            return Err(Error::validation("log-log plots need positive values"));
        }
        raw.iter().map(|&(a, b)| (a.ln(), b.ln())).collect()
    } else {
        raw
    };
    let fit = fit_points(&points).ok();
    let (x0, x1) = padded_range(points.iter().map(|p| p.0));
    let (y0, y1) = padded_range(points.iter().map(|p| p.1));
    let px = |v: f64| MARGIN + (v - x0) / (x1 - x0) * (WIDTH - 2.0 * MARGIN);
    let py = |v: f64| HEIGHT - MARGIN - (v - y0) / (y1 - y0) * (HEIGHT - 2.0 * MARGIN);
    let label = |v: f64| fmt_tick(if loglog { v.exp() } else { v });

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let scale = if loglog { " (log-log)" } else { "" };
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="24" text-anchor="middle" font-size="14">{y} vs {x}{scale}</text>"#,
        WIDTH / 2.0
    );
    let (left, right, top, bottom) = (MARGIN, WIDTH - MARGIN, MARGIN, HEIGHT - MARGIN);
    let _ = writeln!(
        s,
        r#"<path d="M{left:.2} {top:.2} V{bottom:.2} H{right:.2}" fill="none" stroke="black"/>"#
    );
    for i in 0..TICKS {
        let t = i as f64 / (TICKS - 1) as f64;
        let (vx, vy) = (x0 + t * (x1 - x0), y0 + t * (y1 - y0));
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            px(vx),
            bottom + 18.0,
            label(vx)
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            left - 6.0,
            py(vy) + 4.0,
            label(vy)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{x}</text>"#,
        WIDTH / 2.0,
        HEIGHT - 16.0
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">{y}</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0
    );
    if let Some(f) = &fit {
        let xa = points.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
        let xb = points.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
        let _ = writeln!(
            s,
            r#"<line class="fit" x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="firebrick" stroke-dasharray="6 4"/>"#,
            px(xa),
            py(f.slope * xa + f.intercept),
            px(xb),
            py(f.slope * xb + f.intercept)
        );
        let _ = writeln!(
            s,
            r#"<text class="slope" x="{:.2}" y="{:.2}" fill="firebrick">slope = {:.3}, r² = {:.3}</text>"#,
            left + 10.0,
            top + 14.0,
            f.slope,
            f.r_squared
        );
    }
    for &(a, b) in &points {
        let _ = writeln!(
            s,
            r#"<circle class="marker" cx="{:.2}" cy="{:.2}" r="3" fill="steelblue"/>"#,
            px(a),
            py(b)
        );
    }
    s.push_str("</svg>\n");
    Ok(Plot { svg: s, points, fit })
}
