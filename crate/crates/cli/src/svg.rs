//! Minimal self-contained SVG output: line charts with error bands and
//! matrix heatmaps.

use std::fmt::Write as _;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Fixed-precision number formatting keeps the files byte-stable.
fn num(v: f64) -> String {
    let s = format!("{v:.2}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" { "0".into() } else { s.into() }
}

fn tick_label(v: f64) -> String {
    if (v - v.round()).abs() < 1e-9 {
        format!("{}", v.round() as i64)
    } else {
        format!("{v:.2}")
    }
}

struct Doc {
    out: String,
}

impl Doc {
    fn new(width: f64, height: f64) -> Self {
        let mut out = String::new();
        let _ = writeln!(out, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
        let _ = writeln!(
            out,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#,
            w = num(width),
            h = num(height)
        );
        let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
        Self { out }
    }

    fn line(&mut self, x1: f64, y1: f64, x2: f64, y2: f64, stroke: &str, width: f64) {
        let _ = writeln!(
            self.out,
            r#"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="{stroke}" stroke-width="{}"/>"#,
            num(x1),
            num(y1),
            num(x2),
            num(y2),
            num(width)
        );
    }

    fn text(&mut self, x: f64, y: f64, anchor: &str, body: &str, extra: &str) {
        let _ = writeln!(
            self.out,
            r#"<text x="{}" y="{}" text-anchor="{anchor}"{extra}>{}</text>"#,
            num(x),
            num(y),
            escape(body)
        );
    }

    fn finish(mut self) -> String {
        self.out.push_str("</svg>\n");
        self.out
    }
}

/// Stroke of one chart series.
#[derive(Debug, Clone)]
pub struct Style {
    pub color: &'static str,
    pub dash: Option<&'static str>,
}

#[derive(Debug, Clone)]
pub struct Series {
    pub name: String,
    pub style: Style,
    /// `(x, mean, std)`; non-finite means are skipped.
    pub points: Vec<(f64, f64, f64)>,
}

#[derive(Debug, Clone)]
pub struct LineChart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub x_range: (f64, f64),
    pub y_range: (f64, f64),
    pub x_ticks: Vec<f64>,
    pub y_ticks: Vec<f64>,
    pub series: Vec<Series>,
}

impl LineChart {
    pub fn render(&self) -> String {
        let (w, h) = (640.0, 420.0);
        let (left, right, top, bottom) = (60.0, 130.0, 40.0, 50.0);
        let pw = w - left - right;
        let ph = h - top - bottom;
        let (x0, x1) = self.x_range;
        let (y0, y1) = self.y_range;
        let sx = |x: f64| left + (x - x0) / (x1 - x0) * pw;
        let sy = |y: f64| top + ph - (y.clamp(y0, y1) - y0) / (y1 - y0) * ph;

        let mut doc = Doc::new(w, h);
        doc.text(left + pw / 2.0, 22.0, "middle", &self.title, r#" font-size="14""#);
        for &t in &self.y_ticks {
            doc.line(left, sy(t), left + pw, sy(t), "#e0e0e0", 1.0);
            doc.text(left - 6.0, sy(t) + 4.0, "end", &tick_label(t), "");
        }
        for &t in &self.x_ticks {
            doc.line(sx(t), top + ph, sx(t), top + ph + 4.0, "black", 1.0);
            doc.text(sx(t), top + ph + 18.0, "middle", &tick_label(t), "");
        }
        doc.line(left, top, left, top + ph, "black", 1.0);
        doc.line(left, top + ph, left + pw, top + ph, "black", 1.0);
        doc.text(left + pw / 2.0, h - 10.0, "middle", &self.x_label, "");
        let rot = format!(r#" transform="rotate(-90 16 {})""#, num(top + ph / 2.0));
        doc.text(16.0, top + ph / 2.0, "middle", &self.y_label, &rot);

        for s in &self.series {
            let pts: Vec<&(f64, f64, f64)> = s.points.iter().filter(|p| p.1.is_finite()).collect();
            if pts.is_empty() {
                continue;
            }
            // Mean ± std band.
            let mut band = String::new();
            for p in &pts {
                let _ = write!(band, "{},{} ", num(sx(p.0)), num(sy(p.1 + p.2.max(0.0))));
            }
            for p in pts.iter().rev() {
                let _ = write!(band, "{},{} ", num(sx(p.0)), num(sy(p.1 - p.2.max(0.0))));
            }
            let _ = writeln!(
                doc.out,
                r#"<polygon points="{}" fill="{}" fill-opacity="0.12" stroke="none"/>"#,
                band.trim_end(),
                s.style.color
            );
            let line: Vec<String> = pts.iter().map(|p| format!("{},{}", num(sx(p.0)), num(sy(p.1)))).collect();
            let dash = s
                .style
                .dash
                .map(|d| format!(r#" stroke-dasharray="{d}""#))
                .unwrap_or_default();
            let _ = writeln!(
                doc.out,
                r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="2"{dash}/>"#,
                line.join(" "),
                s.style.color
            );
        }

        let lx = left + pw + 15.0;
        for (i, s) in self.series.iter().enumerate() {
            let ly = top + 10.0 + 20.0 * i as f64;
            let dash = s
                .style
                .dash
                .map(|d| format!(r#" stroke-dasharray="{d}""#))
                .unwrap_or_default();
            let _ = writeln!(
                doc.out,
                r#"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="{}" stroke-width="2"{dash}/>"#,
                num(lx),
                num(ly),
                num(lx + 28.0),
                num(ly),
                s.style.color
            );
            doc.text(lx + 34.0, ly + 4.0, "start", &s.name, "");
        }
        doc.finish()
    }
}

/// Grayscale heatmap of a square matrix; darker is larger. `split` draws
/// block separators after that many rows and columns.
#[derive(Debug, Clone)]
pub struct Heatmap {
    pub title: String,
    pub values: Vec<Vec<f64>>,
    pub split: Option<usize>,
}

impl Heatmap {
    pub fn render(&self) -> String {
        let n = self.values.len();
        let cell = if n <= 20 { 28.0 } else { 560.0 / n as f64 };
        let (left, top) = (40.0, 50.0);
        let size = cell * n as f64;
        let mut doc = Doc::new(left + size + 30.0, top + size + 30.0);
        doc.text(left + size / 2.0, 24.0, "middle", &self.title, r#" font-size="14""#);
        let vmax = self
            .values
            .iter()
            .flatten()
            .copied()
            .filter(|v| v.is_finite())
            .fold(0.0, f64::max);
        for (i, row) in self.values.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                let t = if vmax > 0.0 && v.is_finite() { (v / vmax).clamp(0.0, 1.0) } else { 0.0 };
                let g = (255.0 * (1.0 - t)).round() as u8;
                let _ = writeln!(
                    doc.out,
                    r#"<rect x="{}" y="{}" width="{}" height="{}" fill="rgb({g},{g},{g})"/>"#,
                    num(left + cell * j as f64),
                    num(top + cell * i as f64),
                    num(cell),
                    num(cell)
                );
            }
        }
        if n <= 20 {
            for k in 0..n {
                let c = cell * (k as f64 + 0.5);
                doc.text(left + c, top - 6.0, "middle", &(k + 1).to_string(), r#" font-size="10""#);
                doc.text(left - 6.0, top + c + 4.0, "end", &(k + 1).to_string(), r#" font-size="10""#);
            }
        }
        if let Some(s) = self.split.filter(|&s| s > 0 && s < n) {
            let p = cell * s as f64;
            doc.line(left + p, top, left + p, top + size, "#c00000", 1.5);
            doc.line(left, top + p, left + size, top + p, "#c00000", 1.5);
        }
        let _ = writeln!(
            doc.out,
            r#"<rect x="{}" y="{}" width="{s}" height="{s}" fill="none" stroke="black"/>"#,
            num(left),
            num(top),
            s = num(size)
        );
        doc.finish()
    }
}
