//! Minimal SVG rendering for embeddings, null histograms and grid heatmaps.
//!
//! Scatterplots draw exactly one `<circle>` per data row and nothing else
//! as circles, so mark counts can be checked by counting elements.

use std::fmt::Write as _;

use crate::{FppError, Result};

/// Tableau-10 palette for categorical colors.
pub const CATEGORICAL: [&str; 10] = [
    "#4e79a7", "#f28e2b", "#e15759", "#76b7b2", "#59a14f", "#edc948", "#b07aa1", "#ff9da7", "#9c755f",
    "#bab0ac",
];

/// Viridis sampled at nine evenly spaced stops.
const VIRIDIS: [[f64; 3]; 9] = [
    [68.0, 1.0, 84.0],
    [71.0, 44.0, 122.0],
    [59.0, 81.0, 139.0],
    [44.0, 113.0, 142.0],
    [33.0, 144.0, 141.0],
    [39.0, 173.0, 129.0],
    [92.0, 200.0, 99.0],
    [170.0, 220.0, 50.0],
    [253.0, 231.0, 37.0],
];

/// Perceptually uniform color for `t ∈ [0, 1]` (clamped).
pub fn viridis(t: f64) -> String {
    let t = if t.is_finite() { t.clamp(0.0, 1.0) } else { 0.0 };
    let x = t * (VIRIDIS.len() - 1) as f64;
    let i = (x.floor() as usize).min(VIRIDIS.len() - 2);
    let f = x - i as f64;
    let c: Vec<u8> = (0..3)
        .map(|k| (VIRIDIS[i][k] + f * (VIRIDIS[i + 1][k] - VIRIDIS[i][k])).round() as u8)
        .collect();
    format!("#{:02x}{:02x}{:02x}", c[0], c[1], c[2])
}

/// How points are colored.
#[derive(Debug, Clone, Copy)]
pub enum Coloring<'a> {
    Continuous(&'a [f64]),
    Categorical {
        labels: &'a [usize],
        names: &'a [String],
    },
}

impl Coloring<'_> {
    fn len(&self) -> usize {
        match self {
            Coloring::Continuous(v) => v.len(),
            Coloring::Categorical { labels, .. } => labels.len(),
        }
    }
}

/// Escape text for XML content and attributes.
pub fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            _ => out.push(c),
        }
    }
    out
}

/// The `k` inputs with the largest absolute weight in one projection axis,
/// written as a signed linear combination, e.g. `+0.71·x1 −0.70·x2`.
pub fn axis_annotation(weights: &[f64], names: &[String], k: usize) -> String {
    let mut idx: Vec<usize> = (0..weights.len()).collect();
    idx.sort_by(|&a, &b| weights[b].abs().total_cmp(&weights[a].abs()).then(a.cmp(&b)));
    idx.iter()
        .take(k)
        .map(|&i| {
            let w = weights[i];
            let sign = if w < 0.0 { '\u{2212}' } else { '+' };
            format!("{sign}{:.2}\u{b7}{}", w.abs(), names[i])
        })
        .collect::<Vec<_>>()
        .join(" ")
}

/// One scatter panel.
#[derive(Debug, Clone, Copy)]
pub struct Panel<'a> {
    /// Row-major `n × 2` coordinates.
    pub points: &'a [[f64; 2]],
    pub coloring: Coloring<'a>,
    pub title: &'a str,
}

/// Shared axis labels for the panels of one figure.
#[derive(Debug, Clone, Default)]
pub struct Axes {
    pub x_label: String,
    pub y_label: String,
}

const PANEL: f64 = 420.0;
const MARGIN: f64 = 60.0;

fn bounds(points: &[[f64; 2]]) -> [f64; 4] {
    let mut b = [f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY];
    for p in points {
        b[0] = b[0].min(p[0]);
        b[1] = b[1].max(p[0]);
        b[2] = b[2].min(p[1]);
        b[3] = b[3].max(p[1]);
    }
    if !b[0].is_finite() {
        return [-1.0, 1.0, -1.0, 1.0];
    }
    for k in [0, 2] {
        let span = b[k + 1] - b[k];
        let pad = if span > 0.0 { 0.05 * span } else { 1.0 };
        b[k] -= pad;
        b[k + 1] += pad;
    }
    b
}

fn value_range(v: &[f64]) -> (f64, f64) {
    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if lo.is_finite() && hi > lo {
        (lo, hi)
    } else {
        (lo.min(0.0), lo.min(0.0) + 1.0)
    }
}

/// Scatterplot figure with one or more panels side by side sharing the
/// coordinate range, so train and test views can be compared directly.
pub fn scatter_svg(panels: &[Panel], axes: &Axes) -> Result<String> {
    if panels.is_empty() {
        return Err(FppError::invalid("a scatterplot needs at least one panel"));
    }
    for p in panels {
        if p.points.len() != p.coloring.len() {
            return Err(FppError::DimensionMismatch {
                expected: p.points.len(),
                actual: p.coloring.len(),
            });
        }
        if p.points.iter().flatten().any(|v| !v.is_finite()) {
            return Err(FppError::invalid("scatterplot coordinates must be finite"));
        }
    }
    let all: Vec<[f64; 2]> = panels.iter().flat_map(|p| p.points.iter().copied()).collect();
    let b = bounds(&all);
    let continuous: Vec<f64> = panels
        .iter()
        .filter_map(|p| match p.coloring {
            Coloring::Continuous(v) => Some(v),
            _ => None,
        })
        .flatten()
        .copied()
        .collect();
    let (lo, hi) = value_range(&continuous);

    let legend_w = 140.0;
    let width = panels.len() as f64 * (PANEL + MARGIN) + MARGIN + legend_w;
    let height = PANEL + 2.0 * MARGIN + 40.0;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>"#);
    for (k, panel) in panels.iter().enumerate() {
        let x0 = MARGIN + k as f64 * (PANEL + MARGIN);
        let y0 = MARGIN;
        let _ = writeln!(
            s,
            r##"<g><rect x="{x0}" y="{y0}" width="{PANEL}" height="{PANEL}" fill="none" stroke="#444"/>"##
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle" font-size="14">{}</text>"#,
            x0 + PANEL / 2.0,
            y0 - 12.0,
            escape(panel.title)
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
            x0 + PANEL / 2.0,
            y0 + PANEL + 30.0,
            escape(&axes.x_label)
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle" transform="rotate(-90 {} {})">{}</text>"#,
            x0 - 20.0,
            y0 + PANEL / 2.0,
            x0 - 20.0,
            y0 + PANEL / 2.0,
            escape(&axes.y_label)
        );
        for (i, p) in panel.points.iter().enumerate() {
            let px = x0 + (p[0] - b[0]) / (b[1] - b[0]) * PANEL;
            let py = y0 + PANEL - (p[1] - b[2]) / (b[3] - b[2]) * PANEL;
            let fill = match panel.coloring {
                Coloring::Continuous(v) => viridis((v[i] - lo) / (hi - lo)),
                Coloring::Categorical { labels, .. } => CATEGORICAL[labels[i] % CATEGORICAL.len()].to_string(),
            };
            let _ = writeln!(
                s,
                r#"<circle cx="{px:.2}" cy="{py:.2}" r="2.5" fill="{fill}" fill-opacity="0.8"/>"#
            );
        }
        s.push_str("</g>\n");
    }

    let lx = MARGIN + panels.len() as f64 * (PANEL + MARGIN);
    match panels[0].coloring {
        Coloring::Continuous(_) => {
            let steps = 50;
            let h = PANEL / steps as f64;
            for i in 0..steps {
                let t = 1.0 - (i as f64 + 0.5) / steps as f64;
                let _ = writeln!(
                    s,
                    r#"<rect x="{lx}" y="{:.2}" width="16" height="{:.2}" fill="{}"/>"#,
                    MARGIN + i as f64 * h,
                    h + 0.5,
                    viridis(t)
                );
            }
            let _ = writeln!(s, r#"<text x="{}" y="{}">{}</text>"#, lx + 22.0, MARGIN + 10.0, fmt_num(hi));
            let _ = writeln!(s, r#"<text x="{}" y="{}">{}</text>"#, lx + 22.0, MARGIN + PANEL, fmt_num(lo));
        }
        Coloring::Categorical { names, .. } => {
            for (k, name) in names.iter().enumerate() {
                let y = MARGIN + 20.0 * k as f64;
                let _ = writeln!(
                    s,
                    r#"<rect x="{lx}" y="{y}" width="12" height="12" fill="{}"/><text x="{}" y="{}">{}</text>"#,
                    CATEGORICAL[k % CATEGORICAL.len()],
                    lx + 18.0,
                    y + 11.0,
                    escape(name)
                );
            }
        }
    }
    s.push_str("</svg>\n");
    Ok(s)
}

fn fmt_num(v: f64) -> String {
    if v != 0.0 && (v.abs() < 1e-3 || v.abs() >= 1e4) {
        format!("{v:.2e}")
    } else {
        format!("{v:.3}")
    }
}

/// Histogram of null samples with a red vertical line at the observed value.
pub fn histogram_svg(samples: &[f64], observed: f64, bins: usize, title: &str, x_label: &str) -> Result<String> {
    if samples.is_empty() || bins == 0 {
        return Err(FppError::invalid("a histogram needs samples and at least one bin"));
    }
    let mut lo = samples.iter().copied().fold(observed, f64::min);
    let mut hi = samples.iter().copied().fold(observed, f64::max);
    if !(hi > lo) {
        lo -= 0.5;
        hi += 0.5;
    }
    let pad = 0.05 * (hi - lo);
    lo -= pad;
    hi += pad;
    let mut counts = vec![0usize; bins];
    for &v in samples {
        let k = (((v - lo) / (hi - lo)) * bins as f64) as usize;
        counts[k.min(bins - 1)] += 1;
    }
    let max_count = *counts.iter().max().unwrap_or(&1) as f64;
    let (w, h) = (PANEL * 1.4, PANEL * 0.8);
    let width = w + 2.0 * MARGIN;
    let height = h + 2.0 * MARGIN;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle" font-size="14">{}</text>"#,
        MARGIN + w / 2.0,
        MARGIN - 20.0,
        escape(title)
    );
    let bw = w / bins as f64;
    for (k, &c) in counts.iter().enumerate() {
        let bh = c as f64 / max_count * h;
        let _ = writeln!(
            s,
            r##"<rect class="bar" x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="#4e79a7" stroke="white"/>"##,
            MARGIN + k as f64 * bw,
            MARGIN + h - bh,
            bw,
            bh
        );
    }
    let ox = MARGIN + (observed - lo) / (hi - lo) * w;
    let _ = writeln!(
        s,
        r#"<line class="observed" x1="{ox:.2}" y1="{}" x2="{ox:.2}" y2="{}" stroke="red" stroke-width="2"/>"#,
        MARGIN - 5.0,
        MARGIN + h
    );
    let _ = writeln!(
        s,
        r##"<line x1="{MARGIN}" y1="{}" x2="{}" y2="{}" stroke="#444"/>"##,
        MARGIN + h,
        MARGIN + w,
        MARGIN + h
    );
    let _ = writeln!(s, r#"<text x="{MARGIN}" y="{}">{}</text>"#, MARGIN + h + 18.0, fmt_num(lo));
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#,
        MARGIN + w,
        MARGIN + h + 18.0,
        fmt_num(hi)
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        MARGIN + w / 2.0,
        MARGIN + h + 36.0,
        escape(x_label)
    );
    s.push_str("</svg>\n");
    Ok(s)
}

/// Heatmap of a `rows × cols` matrix. Colors span `range` (values outside
/// are clamped for rendering only); cells print their unclamped value.
pub fn heatmap_svg(
    matrix: &[Vec<f64>],
    row_labels: &[String],
    col_labels: &[String],
    range: (f64, f64),
    title: &str,
) -> Result<String> {
    if matrix.len() != row_labels.len() || matrix.iter().any(|r| r.len() != col_labels.len()) {
        return Err(FppError::invalid("heatmap labels do not match the matrix shape"));
    }
    let (lo, hi) = range;
    if !(hi > lo) {
        return Err(FppError::invalid("heatmap range must be increasing"));
    }
    let cell = 64.0;
    let left = 90.0;
    let top = 70.0;
    let width = left + cell * col_labels.len() as f64 + 120.0;
    let height = top + cell * row_labels.len() as f64 + 50.0;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="24" text-anchor="middle" font-size="14">{}</text>"#,
        width / 2.0,
        escape(title)
    );
    for (i, row) in matrix.iter().enumerate() {
        let y = top + cell * i as f64;
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#,
            left - 8.0,
            y + cell / 2.0 + 4.0,
            escape(&row_labels[i])
        );
        for (j, &v) in row.iter().enumerate() {
            let x = left + cell * j as f64;
            let t = (v - lo) / (hi - lo);
            let fill = if v.is_finite() { viridis(t) } else { "#cccccc".into() };
            let ink = if v.is_finite() && t.clamp(0.0, 1.0) > 0.6 { "black" } else { "white" };
            let _ = writeln!(
                s,
                r#"<rect class="cell" x="{x}" y="{y}" width="{cell}" height="{cell}" fill="{fill}"/><text x="{}" y="{}" text-anchor="middle" fill="{ink}">{}</text>"#,
                x + cell / 2.0,
                y + cell / 2.0 + 4.0,
                fmt_num(v)
            );
        }
    }
    for (j, label) in col_labels.iter().enumerate() {
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
            left + cell * (j as f64 + 0.5),
            top - 8.0,
            escape(label)
        );
    }
    let lx = left + cell * col_labels.len() as f64 + 20.0;
    let bar_h = cell * row_labels.len() as f64;
    let steps = 40;
    for k in 0..steps {
        let t = 1.0 - (k as f64 + 0.5) / steps as f64;
        let _ = writeln!(
            s,
            r#"<rect x="{lx}" y="{:.2}" width="14" height="{:.2}" fill="{}"/>"#,
            top + k as f64 * bar_h / steps as f64,
            bar_h / steps as f64 + 0.5,
            viridis(t)
        );
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}">{}</text>"#, lx + 20.0, top + 10.0, fmt_num(hi));
    let _ = writeln!(s, r#"<text x="{}" y="{}">{}</text>"#, lx + 20.0, top + bar_h, fmt_num(lo));
    s.push_str("</svg>\n");
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn viridis_endpoints() {
        assert_eq!(viridis(0.0), "#440154");
        assert_eq!(viridis(1.0), "#fde725");
        assert_eq!(viridis(-3.0), viridis(0.0));
        assert_eq!(viridis(f64::NAN), viridis(0.0));
    }

    #[test]
    fn annotation_lists_top_weights() {
        let names: Vec<String> = ["a", "b", "c", "d"].iter().map(|s| s.to_string()).collect();
        let s = axis_annotation(&[0.1, -0.8, 0.5, 0.3], &names, 3);
        assert_eq!(s, "\u{2212}0.80\u{b7}b +0.50\u{b7}c +0.30\u{b7}d");
    }

    #[test]
    fn scatter_has_one_circle_per_row() {
        let pts: Vec<[f64; 2]> = (0..37).map(|i| [i as f64, (i * i) as f64]).collect();
        let vals: Vec<f64> = (0..37).map(f64::from).collect();
        let svg = scatter_svg(
            &[Panel {
                points: &pts,
                coloring: Coloring::Continuous(&vals),
                title: "t <1>",
            }],
            &Axes::default(),
        )
        .unwrap();
        assert_eq!(svg.matches("<circle").count(), 37);
        assert!(svg.contains("t &lt;1&gt;"));
        let names = vec!["x".to_string(), "y".to_string()];
        let labels: Vec<usize> = (0..37).map(|i| i % 2).collect();
        let svg = scatter_svg(
            &[
                Panel {
                    points: &pts,
                    coloring: Coloring::Categorical { labels: &labels, names: &names },
                    title: "train",
                },
                Panel {
                    points: &pts[..5],
                    coloring: Coloring::Categorical { labels: &labels[..5], names: &names },
                    title: "test",
                },
            ],
            &Axes::default(),
        )
        .unwrap();
        assert_eq!(svg.matches("<circle").count(), 42);
    }

    #[test]
    fn scatter_rejects_bad_input() {
        let pts = [[0.0, f64::NAN]];
        assert!(scatter_svg(
            &[Panel { points: &pts, coloring: Coloring::Continuous(&[1.0]), title: "" }],
            &Axes::default()
        )
        .is_err());
        let pts = [[0.0, 0.0]];
        assert!(scatter_svg(
            &[Panel { points: &pts, coloring: Coloring::Continuous(&[]), title: "" }],
            &Axes::default()
        )
        .is_err());
    }

    #[test]
    fn histogram_and_heatmap() {
        let svg = histogram_svg(&[1.0, 2.0, 2.5, 3.0], 0.2, 5, "null", "loss").unwrap();
        assert_eq!(svg.matches("class=\"bar\"").count(), 5);
        assert_eq!(svg.matches("class=\"observed\"").count(), 1);
        let m = vec![vec![0.01, 0.5], vec![0.2, f64::NAN]];
        let labels = vec!["a".to_string(), "b".to_string()];
        let svg = heatmap_svg(&m, &labels, &labels, (0.0, 0.05), "p").unwrap();
        assert_eq!(svg.matches("class=\"cell\"").count(), 4);
        assert!(svg.contains("0.500"));
        assert!(heatmap_svg(&m, &labels[..1], &labels, (0.0, 1.0), "").is_err());
    }
}
