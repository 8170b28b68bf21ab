//! Minimal SVG line and scatter charts on an 800×600 canvas.

use std::fmt::Write;

pub const WIDTH: f64 = 800.0;
pub const HEIGHT: f64 = 600.0;
const MARGIN: f64 = 60.0;
const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Data-to-canvas mapping over a padded bounding box.
struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn fit<'a>(points: impl Iterator<Item = &'a (f64, f64)>) -> Self {
        let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for &(x, y) in points {
            x0 = x0.min(x);
            x1 = x1.max(x);
            y0 = y0.min(y);
            y1 = y1.max(y);
        }
        if !x0.is_finite() {
            return Frame { x0: 0.0, x1: 1.0, y0: 0.0, y1: 1.0 };
        }
        let pad = |lo: f64, hi: f64| if hi - lo < 1e-12 { (lo - 0.5, hi + 0.5) } else { (lo, hi) };
        let (x0, x1) = pad(x0, x1);
        let (y0, y1) = pad(y0, y1);
        Frame { x0, x1, y0, y1 }
    }

    fn px(&self, x: f64) -> f64 {
        MARGIN + (x - self.x0) / (self.x1 - self.x0) * (WIDTH - 2.0 * MARGIN)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - MARGIN - (y - self.y0) / (self.y1 - self.y0) * (HEIGHT - 2.0 * MARGIN)
    }
}

fn header(out: &mut String, title: &str, frame: &Frame, x_label: &str, y_label: &str) {
    let _ = writeln!(out, r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {WIDTH} {HEIGHT}" width="{WIDTH}" height="{HEIGHT}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(out, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(out, r#"<text x="{}" y="30" text-anchor="middle" font-size="16">{}</text>"#, WIDTH / 2.0, escape(title));
    let (l, r, t, b) = (MARGIN, WIDTH - MARGIN, MARGIN, HEIGHT - MARGIN);
    let _ = writeln!(out, r#"<rect x="{l}" y="{t}" width="{}" height="{}" fill="none" stroke="black"/>"#, r - l, b - t);
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let (xv, yv) = (frame.x0 + f * (frame.x1 - frame.x0), frame.y0 + f * (frame.y1 - frame.y0));
        let _ = writeln!(out, r#"<text x="{:.1}" y="{}" text-anchor="middle">{xv:.3}</text>"#, frame.px(xv), b + 18.0);
        let _ = writeln!(out, r#"<text x="{}" y="{:.1}" text-anchor="end">{yv:.3}</text>"#, l - 6.0, frame.py(yv) + 4.0);
    }
    let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, WIDTH / 2.0, HEIGHT - 15.0, escape(x_label));
    let _ = writeln!(
        out,
        r#"<text x="18" y="{}" text-anchor="middle" transform="rotate(-90 18 {})">{}</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0,
        escape(y_label)
    );
}

fn legend(out: &mut String, names: &[&str]) {
    for (i, name) in names.iter().enumerate() {
        let y = MARGIN + 16.0 + 18.0 * i as f64;
        let color = PALETTE[i % PALETTE.len()];
        let _ = writeln!(out, r#"<rect x="{}" y="{}" width="12" height="12" fill="{color}"/>"#, WIDTH - MARGIN - 150.0, y - 10.0);
        let _ = writeln!(out, r#"<text x="{}" y="{y}">{}</text>"#, WIDTH - MARGIN - 132.0, escape(name));
    }
}

/// Polyline chart with one series per `(name, points)`.
pub fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[(&str, &[(f64, f64)])]) -> String {
    let frame = Frame::fit(series.iter().flat_map(|(_, p)| p.iter()));
    let mut out = String::new();
    header(&mut out, title, &frame, x_label, y_label);
    for (i, (_, points)) in series.iter().enumerate() {
        let coords: Vec<String> = points.iter().map(|&(x, y)| format!("{:.2},{:.2}", frame.px(x), frame.py(y))).collect();
        let color = PALETTE[i % PALETTE.len()];
        let _ = writeln!(out, r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#, coords.join(" "));
    }
    legend(&mut out, &series.iter().map(|(n, _)| *n).collect::<Vec<_>>());
    out.push_str("</svg>\n");
    out
}

/// Scatter plot coloured by class index.
pub fn scatter(title: &str, x_label: &str, y_label: &str, points: &[(f64, f64)], classes: &[usize], class_names: &[&str]) -> String {
    let frame = Frame::fit(points.iter());
    let mut out = String::new();
    header(&mut out, title, &frame, x_label, y_label);
    for (&(x, y), &c) in points.iter().zip(classes) {
        let color = PALETTE[c % PALETTE.len()];
        let _ = writeln!(out, r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}" fill-opacity="0.8"/>"#, frame.px(x), frame.py(y));
    }
    legend(&mut out, class_names);
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn documents_are_well_formed_enough() {
        let pts = [(0.0, 0.0), (0.5, 0.8), (1.0, 1.0)];
        let s = line_chart("ROC <a&b>", "fpr", "tpr", &[("a", &pts)]);
        assert!(s.starts_with("<svg") && s.trim_end().ends_with("</svg>"));
        assert!(s.contains(r#"viewBox="0 0 800 600""#));
        assert!(s.contains("ROC &lt;a&amp;b&gt;"));
        let sc = scatter("pca", "pc1", "pc2", &pts, &[0, 1, 1], &["x", "y"]);
        assert_eq!(sc.matches("<circle").count(), 3);
    }
}
