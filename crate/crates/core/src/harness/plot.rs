//! Hand-written SVG charts. Coordinates are printed with three decimals so
//! identical inputs give identical bytes.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::record::RunRecord;

/// Columns in the p̃ heat strip.
pub const HEAT_COLUMNS: usize = 60;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 360.0;
const MARGIN: f64 = 48.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

/// Mean evaluation return with a ±1 std band.
#[derive(Clone, Debug, PartialEq)]
pub struct CurveSeries {
    pub label: String,
    pub steps: Vec<u64>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

fn header(out: &mut String, width: f64, height: f64) {
    writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">"#
    )
    .unwrap();
    writeln!(out, r#"<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>"#).unwrap();
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn check_finite(values: impl IntoIterator<Item = f64>, what: &str) -> Result<()> {
    if values.into_iter().all(f64::is_finite) {
        Ok(())
    } else {
        Err(Error::NonFinite(format!("{what} contains a non-finite value")))
    }
}

/// Maps `[lo, hi]` onto `[out_lo, out_hi]`; a degenerate range maps to the
/// middle.
fn scale(v: f64, lo: f64, hi: f64, out_lo: f64, out_hi: f64) -> f64 {
    if hi > lo {
        out_lo + (v - lo) / (hi - lo) * (out_hi - out_lo)
    } else {
        0.5 * (out_lo + out_hi)
    }
}

/// Line chart of each series' mean with a shaded `mean ± std` polygon.
pub fn training_curve_svg(series: &[CurveSeries]) -> Result<String> {
    if series.is_empty() {
        return Err(Error::Contract("no curves to plot".into()));
    }
    for s in series {
        if s.steps.is_empty() || s.mean.len() != s.steps.len() || s.std.len() != s.steps.len() {
            return Err(Error::Shape {
                expected: format!("{} non-empty aligned columns", s.label),
                got: format!("{}/{}/{}", s.steps.len(), s.mean.len(), s.std.len()),
            });
        }
        check_finite(s.mean.iter().chain(&s.std).copied(), &s.label)?;
    }
    let x_lo = series.iter().flat_map(|s| &s.steps).min().copied().unwrap() as f64;
    let x_hi = series.iter().flat_map(|s| &s.steps).max().copied().unwrap() as f64;
    let ys = series
        .iter()
        .flat_map(|s| s.mean.iter().zip(&s.std).flat_map(|(m, d)| [m - d, m + d]));
    let (y_lo, y_hi) = ys.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), y| (lo.min(y), hi.max(y)));

    let px = |x: u64| scale(x as f64, x_lo, x_hi, MARGIN, WIDTH - MARGIN);
    let py = |y: f64| scale(y, y_lo, y_hi, HEIGHT - MARGIN, MARGIN);

    let mut out = String::new();
    header(&mut out, WIDTH, HEIGHT);
    axes(&mut out, (x_lo, x_hi), (y_lo, y_hi), "environment steps", "evaluation return");
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let mut band = String::new();
        for (x, (m, d)) in s.steps.iter().zip(s.mean.iter().zip(&s.std)) {
            write!(band, "{:.3},{:.3} ", px(*x), py(m + d)).unwrap();
        }
        for (x, (m, d)) in s.steps.iter().zip(s.mean.iter().zip(&s.std)).rev() {
            write!(band, "{:.3},{:.3} ", px(*x), py(m - d)).unwrap();
        }
        writeln!(
            out,
            r#"<polygon class="band" points="{}" fill="{color}" fill-opacity="0.2" stroke="none"/>"#,
            band.trim_end()
        )
        .unwrap();
        let line: Vec<String> = s
            .steps
            .iter()
            .zip(&s.mean)
            .map(|(x, m)| format!("{:.3},{:.3}", px(*x), py(*m)))
            .collect();
        writeln!(
            out,
            r#"<polyline class="mean" points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
            line.join(" ")
        )
        .unwrap();
        let ly = MARGIN + 14.0 * i as f64;
        writeln!(
            out,
            r#"<rect x="{:.3}" y="{:.3}" width="10" height="10" fill="{color}"/><text x="{:.3}" y="{:.3}">{}</text>"#,
            WIDTH - MARGIN - 110.0,
            ly - 9.0,
            WIDTH - MARGIN - 95.0,
            ly,
            escape(&s.label)
        )
        .unwrap();
    }
    out.push_str("</svg>\n");
    Ok(out)
}

fn axes(out: &mut String, x: (f64, f64), y: (f64, f64), x_label: &str, y_label: &str) {
    let (l, r, t, b) = (MARGIN, WIDTH - MARGIN, MARGIN, HEIGHT - MARGIN);
    writeln!(
        out,
        r#"<polyline points="{l:.3},{t:.3} {l:.3},{b:.3} {r:.3},{b:.3}" fill="none" stroke="black"/>"#
    )
    .unwrap();
    writeln!(out, r#"<text x="{l:.3}" y="{:.3}">{}</text>"#, b + 16.0, x.0).unwrap();
    writeln!(out, r#"<text x="{r:.3}" y="{:.3}" text-anchor="end">{}</text>"#, b + 16.0, x.1).unwrap();
    writeln!(out, r#"<text x="{:.3}" y="{b:.3}" text-anchor="end">{:.3}</text>"#, l - 4.0, y.0).unwrap();
    writeln!(out, r#"<text x="{:.3}" y="{t:.3}" text-anchor="end">{:.3}</text>"#, l - 4.0, y.1).unwrap();
    writeln!(out, r#"<text x="{:.3}" y="{:.3}" text-anchor="middle">{x_label}</text>"#, (l + r) / 2.0, b + 30.0).unwrap();
    writeln!(out, r#"<text x="12" y="{:.3}" transform="rotate(-90 12 {:.3})" text-anchor="middle">{y_label}</text>"#, (t + b) / 2.0, (t + b) / 2.0).unwrap();
}

/// White-to-blue ramp for probabilities in `[0, 1]`.
fn heat_color(p: f64) -> String {
    let p = p.clamp(0.0, 1.0);
    let ch = |lo: f64| (255.0 - p * (255.0 - lo)).round() as u8;
    format!("#{:02x}{:02x}{:02x}", ch(8.0), ch(48.0), ch(107.0))
}

/// Averages the per-episode p̃ rows of `records` into `columns` equal spans
/// of training steps. Empty spans are skipped.
pub fn ptilde_columns(records: &[&RunRecord], columns: usize) -> Vec<Vec<f64>> {
    let total = records.iter().map(|r| r.total_steps()).max().unwrap_or(0);
    let na = records.first().map_or(0, |r| r.num_actions);
    if total == 0 || columns == 0 || na == 0 {
        return Vec::new();
    }
    let mut sums = vec![vec![0.0; na]; columns];
    let mut counts = vec![0usize; columns];
    for r in records {
        for row in &r.episodes {
            let bin = (((row.steps - 1) as u128 * columns as u128) / total as u128) as usize;
            for (s, p) in sums[bin].iter_mut().zip(&row.ptilde) {
                *s += p;
            }
            counts[bin] += 1;
        }
    }
    sums.into_iter()
        .zip(counts)
        .filter(|(_, c)| *c > 0)
        .map(|(s, c)| s.into_iter().map(|v| v / c as f64).collect())
        .collect()
}

/// Heat strip of p̃ over training: one row per action, one column per time
/// span, darker cells for higher probability.
pub fn heat_strip_svg(action_names: &[&str], columns: &[Vec<f64>]) -> Result<String> {
    if columns.is_empty() {
        return Err(Error::Contract("no sparsity columns to plot".into()));
    }
    let na = action_names.len();
    if let Some(bad) = columns.iter().find(|c| c.len() != na) {
        return Err(Error::Shape {
            expected: format!("{na} actions per column"),
            got: bad.len().to_string(),
        });
    }
    check_finite(columns.iter().flatten().copied(), "sparsity columns")?;
    let label_w = 80.0;
    let cell_w = (WIDTH - label_w - MARGIN) / columns.len() as f64;
    let cell_h = 24.0;
    let height = 2.0 * MARGIN + cell_h * na as f64;
    let mut out = String::new();
    header(&mut out, WIDTH, height);
    for (a, name) in action_names.iter().enumerate() {
        let y = MARGIN + cell_h * a as f64;
        writeln!(out, r#"<text x="{:.3}" y="{:.3}" text-anchor="end">{}</text>"#, label_w - 6.0, y + 16.0, escape(name)).unwrap();
        for (c, col) in columns.iter().enumerate() {
            writeln!(
                out,
                r#"<rect class="cell" x="{:.3}" y="{y:.3}" width="{:.3}" height="{cell_h:.3}" fill="{}"/>"#,
                label_w + cell_w * c as f64,
                cell_w,
                heat_color(col[a])
            )
            .unwrap();
        }
    }
    writeln!(
        out,
        r#"<text x="{:.3}" y="{:.3}" text-anchor="middle">training progress (p&#771; per action)</text>"#,
        label_w + (WIDTH - label_w - MARGIN) / 2.0,
        height - MARGIN / 2.0
    )
    .unwrap();
    out.push_str("</svg>\n");
    Ok(out)
}

/// Bar chart of sparse-action execution frequency, one bar per label.
pub fn frequency_bars_svg(bars: &[(String, f64)]) -> Result<String> {
    if bars.is_empty() {
        return Err(Error::Contract("no frequencies to plot".into()));
    }
    check_finite(bars.iter().map(|b| b.1), "frequencies")?;
    let top = bars.iter().map(|b| b.1).fold(0.0, f64::max).max(1e-12);
    let slot = (WIDTH - 2.0 * MARGIN) / bars.len() as f64;
    let base = HEIGHT - MARGIN;
    let mut out = String::new();
    header(&mut out, WIDTH, HEIGHT);
    axes(&mut out, (0.0, 0.0), (0.0, top), "", "sparse-action execution frequency");
    for (i, (label, v)) in bars.iter().enumerate() {
        let h = v / top * (HEIGHT - 2.0 * MARGIN);
        let x = MARGIN + slot * i as f64 + 0.2 * slot;
        writeln!(
            out,
            r#"<rect class="bar" data-value="{v}" x="{x:.3}" y="{:.3}" width="{:.3}" height="{h:.3}" fill="{}"/>"#,
            base - h,
            0.6 * slot,
            PALETTE[i % PALETTE.len()]
        )
        .unwrap();
        writeln!(
            out,
            r#"<text x="{:.3}" y="{:.3}" text-anchor="middle">{} ({v:.3})</text>"#,
            x + 0.3 * slot,
            base + 16.0,
            escape(label)
        )
        .unwrap();
    }
    out.push_str("</svg>\n");
    Ok(out)
}
