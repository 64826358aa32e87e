//! Minimal SVG line plots: axes, ticks, one polyline per series and a legend.

use std::fmt::Write;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN_LEFT: f64 = 64.0;
const MARGIN_RIGHT: f64 = 150.0;
const MARGIN_Y: f64 = 40.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LinePlot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
    /// Extra legend lines, e.g. for series with nothing to draw.
    pub notes: Vec<String>,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn extent(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        let pad = lo.abs().max(1.0) * 0.05;
        return (lo - pad, hi + pad);
    }
    let pad = (hi - lo) * 0.05;
    (lo - pad, hi + pad)
}

impl LinePlot {
    pub fn to_svg(&self) -> String {
        let points = || self.series.iter().flat_map(|s| s.points.iter());
        let (x0, x1) = extent(points().map(|p| p.0));
        let (y0, y1) = extent(points().map(|p| p.1));
        let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
        let plot_h = HEIGHT - 2.0 * MARGIN_Y;
        let sx = |x: f64| MARGIN_LEFT + (x - x0) / (x1 - x0) * plot_w;
        let sy = |y: f64| MARGIN_Y + (y1 - y) / (y1 - y0) * plot_h;

        let mut svg = String::new();
        let _ = writeln!(
            svg,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">"#
        );
        let _ = writeln!(svg, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#,
            MARGIN_LEFT + plot_w / 2.0,
            escape(&self.title)
        );
        let (left, right, top, bottom) = (MARGIN_LEFT, MARGIN_LEFT + plot_w, MARGIN_Y, MARGIN_Y + plot_h);
        let _ = writeln!(
            svg,
            r#"<path d="M{left} {top} L{left} {bottom} L{right} {bottom}" fill="none" stroke="black"/>"#
        );
        for i in 0..=4 {
            let t = i as f64 / 4.0;
            let (xv, yv) = (x0 + t * (x1 - x0), y0 + t * (y1 - y0));
            let (px, py) = (sx(xv), sy(yv));
            let _ = writeln!(svg, r#"<line x1="{px:.2}" y1="{bottom}" x2="{px:.2}" y2="{}" stroke="black"/>"#, bottom + 4.0);
            let _ = writeln!(
                svg,
                r#"<text x="{px:.2}" y="{}" text-anchor="middle">{xv:.2}</text>"#,
                bottom + 16.0
            );
            let _ = writeln!(svg, r#"<line x1="{}" y1="{py:.2}" x2="{left}" y2="{py:.2}" stroke="black"/>"#, left - 4.0);
            let _ = writeln!(
                svg,
                r#"<text x="{}" y="{:.2}" text-anchor="end">{yv:.4}</text>"#,
                left - 6.0,
                py + 4.0
            );
        }
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
            MARGIN_LEFT + plot_w / 2.0,
            HEIGHT - 6.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            svg,
            r#"<text x="14" y="{0}" text-anchor="middle" transform="rotate(-90 14 {0})">{1}</text>"#,
            MARGIN_Y + plot_h / 2.0,
            escape(&self.y_label)
        );

        let mut legend_y = MARGIN_Y + 10.0;
        for (k, s) in self.series.iter().enumerate() {
            let color = PALETTE[k % PALETTE.len()];
            if !s.points.is_empty() {
                let pts: Vec<String> = s.points.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
                let _ = writeln!(
                    svg,
                    r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
                    pts.join(" ")
                );
            }
            let _ = writeln!(
                svg,
                r#"<line x1="{0}" y1="{legend_y}" x2="{1}" y2="{legend_y}" stroke="{color}" stroke-width="2"/><text x="{2}" y="{3}">{4}</text>"#,
                right + 12.0,
                right + 32.0,
                right + 38.0,
                legend_y + 4.0,
                escape(&s.name)
            );
            legend_y += 16.0;
        }
        for note in &self.notes {
            let _ = writeln!(svg, r#"<text x="{}" y="{}">{}</text>"#, right + 12.0, legend_y + 4.0, escape(note));
            legend_y += 16.0;
        }
        svg.push_str("</svg>\n");
        svg
    }
}
