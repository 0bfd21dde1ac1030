//! Minimal line charts: one polyline per series with a shaded ±1 SE band.

use std::fmt::Write;

const PANEL_W: f64 = 440.0;
const PANEL_H: f64 = 300.0;
const MARGIN_L: f64 = 62.0;
const MARGIN_R: f64 = 16.0;
const MARGIN_T: f64 = 30.0;
const MARGIN_B: f64 = 44.0;
const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
];

#[derive(Debug, Clone, PartialEq)]
pub struct Line {
    pub label: String,
    /// `(x, mean, standard error)`.
    pub points: Vec<(f64, f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Panel {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub lines: Vec<Line>,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

fn bounds(panel: &Panel) -> ((f64, f64), (f64, f64)) {
    let mut x = (f64::INFINITY, f64::NEG_INFINITY);
    let mut y = (f64::INFINITY, f64::NEG_INFINITY);
    for &(px, m, se) in panel.lines.iter().flat_map(|l| l.points.iter()) {
        x = (x.0.min(px), x.1.max(px));
        y = (y.0.min(m - se), y.1.max(m + se));
    }
    if !x.0.is_finite() {
        return ((0.0, 1.0), (0.0, 1.0));
    }
    if x.1 <= x.0 {
        x.1 = x.0 + 1.0;
    }
    if y.1 <= y.0 {
        y = (y.0 - 0.5, y.1 + 0.5);
    }
    (x, y)
}

fn tick_label(v: f64) -> String {
    let a = v.abs();
    if a >= 1e4 {
        format!("{:.0}k", v / 1e3)
    } else if a >= 100.0 || v == 0.0 {
        format!("{v:.0}")
    } else {
        format!("{v:.2}")
    }
}

fn draw_panel(
    out: &mut String,
    panel: &Panel,
    ox: f64,
    oy: f64,
    colors: &dyn Fn(&str) -> &'static str,
) {
    let ((x0, x1), (y0, y1)) = bounds(panel);
    let pw = PANEL_W - MARGIN_L - MARGIN_R;
    let ph = PANEL_H - MARGIN_T - MARGIN_B;
    let sx = |x: f64| ox + MARGIN_L + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| oy + MARGIN_T + (1.0 - (y - y0) / (y1 - y0)) * ph;

    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-size="13">{}</text>"#,
        ox + MARGIN_L + pw / 2.0,
        oy + 18.0,
        escape(&panel.title)
    );
    let _ = writeln!(
        out,
        r##"<rect x="{:.1}" y="{:.1}" width="{pw:.1}" height="{ph:.1}" fill="none" stroke="#444"/>"##,
        ox + MARGIN_L,
        oy + MARGIN_T
    );
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let (xv, yv) = (x0 + f * (x1 - x0), y0 + f * (y1 - y0));
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-size="10">{}</text>"#,
            sx(xv),
            oy + MARGIN_T + ph + 14.0,
            tick_label(xv)
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end" font-size="10">{}</text>"#,
            ox + MARGIN_L - 4.0,
            sy(yv) + 3.0,
            tick_label(yv)
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-size="11">{}</text>"#,
        ox + MARGIN_L + pw / 2.0,
        oy + PANEL_H - 8.0,
        escape(&panel.x_label)
    );
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-size="11" transform="rotate(-90 {:.1} {:.1})">{}</text>"#,
        ox + 14.0,
        oy + MARGIN_T + ph / 2.0,
        ox + 14.0,
        oy + MARGIN_T + ph / 2.0,
        escape(&panel.y_label)
    );

    for line in &panel.lines {
        if line.points.is_empty() {
            continue;
        }
        let color = colors(&line.label);
        let mut band = String::new();
        for &(x, m, se) in &line.points {
            let _ = write!(band, "{:.1},{:.1} ", sx(x), sy(m + se));
        }
        for &(x, m, se) in line.points.iter().rev() {
            let _ = write!(band, "{:.1},{:.1} ", sx(x), sy(m - se));
        }
        let _ = writeln!(
            out,
            r#"<polygon points="{}" fill="{color}" fill-opacity="0.18" stroke="none"/>"#,
            band.trim_end()
        );
        let mut pts = String::new();
        for &(x, m, _) in &line.points {
            let _ = write!(pts, "{:.1},{:.1} ", sx(x), sy(m));
        }
        let _ = writeln!(
            out,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.4"/>"#,
            pts.trim_end()
        );
    }
}

/// Renders `panels` on a grid with `columns` columns and a shared legend
/// keyed by line label.
pub fn render(panels: &[Panel], columns: usize) -> String {
    let columns = columns.max(1);
    let rows = panels.len().div_ceil(columns).max(1);
    let mut labels: Vec<&str> = Vec::new();
    for l in panels.iter().flat_map(|p| p.lines.iter()) {
        if !labels.contains(&l.label.as_str()) {
            labels.push(&l.label);
        }
    }
    let legend_h = 22.0;
    let width = PANEL_W * columns.min(panels.len().max(1)) as f64;
    let height = PANEL_H * rows as f64 + legend_h;

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}" font-family="sans-serif">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let color_of = |label: &str| {
        let i = labels.iter().position(|l| *l == label).unwrap_or(0);
        PALETTE[i % PALETTE.len()]
    };
    for (i, panel) in panels.iter().enumerate() {
        let ox = (i % columns) as f64 * PANEL_W;
        let oy = legend_h + (i / columns) as f64 * PANEL_H;
        draw_panel(&mut out, panel, ox, oy, &color_of);
    }
    let mut lx = MARGIN_L;
    for label in &labels {
        let color = color_of(label);
        let _ = writeln!(
            out,
            r#"<line x1="{lx:.1}" y1="12" x2="{:.1}" y2="12" stroke="{color}" stroke-width="3"/>"#,
            lx + 18.0
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="16" font-size="11">{}</text>"#,
            lx + 22.0,
            escape(label)
        );
        lx += 30.0 + 7.0 * label.len() as f64;
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_polyline_and_band_per_line() {
        let panel = Panel {
            title: "a < b".into(),
            x_label: "step".into(),
            y_label: "return".into(),
            lines: vec![
                Line {
                    label: "fifo".into(),
                    points: vec![(0.0, 1.0, 0.1), (10.0, 2.0, 0.2)],
                },
                Line {
                    label: "mtr".into(),
                    points: vec![(0.0, 0.5, 0.0), (10.0, 1.5, 0.0)],
                },
            ],
        };
        let svg = render(&[panel.clone(), panel], 2);
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<polyline").count(), 4);
        assert_eq!(svg.matches("<polygon").count(), 4);
        assert!(svg.contains("a &lt; b"));
        assert!(!svg.contains("NaN"));
    }

    #[test]
    fn empty_and_flat_panels_do_not_divide_by_zero() {
        let flat = Panel {
            lines: vec![Line {
                label: "x".into(),
                points: vec![(5.0, 3.0, 0.0)],
            }],
            ..Panel::default()
        };
        let svg = render(&[Panel::default(), flat], 1);
        assert!(!svg.contains("NaN") && !svg.contains("inf"));
    }
}
