//! Minimal hand-written SVG charts: a grid of panels, each with numeric axes
//! and any mix of polylines, point clouds and text.

use std::fmt::Write as _;

pub const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b", "#e377c2",
];

const MARGIN_LEFT: f64 = 56.0;
const MARGIN_RIGHT: f64 = 14.0;
const MARGIN_TOP: f64 = 28.0;
const MARGIN_BOTTOM: f64 = 42.0;

#[derive(Debug, Clone)]
pub enum Item {
    Line {
        points: Vec<(f64, f64)>,
        color: String,
        width: f64,
        opacity: f64,
        dashed: bool,
    },
    Points {
        points: Vec<(f64, f64)>,
        color: String,
        radius: f64,
        opacity: f64,
    },
    /// Legend entry drawn in the panel's top-right corner.
    Legend { label: String, color: String },
}

#[derive(Debug, Clone)]
pub struct Panel {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub x_range: (f64, f64),
    pub y_range: (f64, f64),
    pub items: Vec<Item>,
}

impl Panel {
    pub fn new(title: impl Into<String>, x_label: impl Into<String>, y_label: impl Into<String>) -> Self {
        Self {
            title: title.into(),
            x_label: x_label.into(),
            y_label: y_label.into(),
            x_range: (0.0, 1.0),
            y_range: (0.0, 1.0),
            items: Vec::new(),
        }
    }

    pub fn ranges(mut self, x: (f64, f64), y: (f64, f64)) -> Self {
        self.x_range = widen(x);
        self.y_range = widen(y);
        self
    }

    pub fn line(&mut self, points: Vec<(f64, f64)>, color: &str, width: f64, opacity: f64) {
        self.items.push(Item::Line {
            points,
            color: color.into(),
            width,
            opacity,
            dashed: false,
        });
    }

    pub fn dashed(&mut self, points: Vec<(f64, f64)>, color: &str, width: f64) {
        self.items.push(Item::Line {
            points,
            color: color.into(),
            width,
            opacity: 1.0,
            dashed: true,
        });
    }

    pub fn points(&mut self, points: Vec<(f64, f64)>, color: &str, radius: f64, opacity: f64) {
        self.items.push(Item::Points {
            points,
            color: color.into(),
            radius,
            opacity,
        });
    }

    pub fn legend(&mut self, label: impl Into<String>, color: &str) {
        self.items.push(Item::Legend {
            label: label.into(),
            color: color.into(),
        });
    }
}

fn widen((lo, hi): (f64, f64)) -> (f64, f64) {
    if !(lo.is_finite() && hi.is_finite()) {
        (0.0, 1.0)
    } else if hi - lo < 1e-12 {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

/// Smallest range enclosing all values, padded by `pad` of its width.
pub fn extent(values: impl IntoIterator<Item = f64>, pad: f64) -> (f64, f64) {
    let (lo, hi) = values
        .into_iter()
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    let (lo, hi) = widen((lo, hi));
    let w = hi - lo;
    (lo - pad * w, hi + pad * w)
}

/// Tick positions at a 1-2-5 step inside `[lo, hi]`.
pub fn ticks(lo: f64, hi: f64, target: usize) -> Vec<f64> {
    let raw = (hi - lo) / target.max(1) as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| *s >= raw)
        .unwrap_or(10.0 * mag);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last).map(|k| k as f64 * step).collect()
}

fn tick_label(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let a = v.abs();
    if (1e-3..1e4).contains(&a) {
        let s = format!("{v:.3}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        format!("{v:.1e}")
    }
}

pub fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

pub struct Figure {
    pub cols: usize,
    pub panel_width: f64,
    pub panel_height: f64,
    pub title: Option<String>,
    pub panels: Vec<Panel>,
}

impl Figure {
    pub fn new(cols: usize, panel_width: f64, panel_height: f64) -> Self {
        Self {
            cols: cols.max(1),
            panel_width,
            panel_height,
            title: None,
            panels: Vec::new(),
        }
    }

    pub fn render(&self) -> String {
        let rows = self.panels.len().div_ceil(self.cols).max(1);
        let head = if self.title.is_some() { 30.0 } else { 0.0 };
        let width = self.cols as f64 * self.panel_width;
        let height = head + rows as f64 * self.panel_height;
        let mut out = String::new();
        let _ = writeln!(
            out,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">"#
        );
        let _ = writeln!(out, r#"<rect width="{width}" height="{height}" fill="white"/>"#);
        if let Some(t) = &self.title {
            let _ = writeln!(
                out,
                r#"<text x="{:.1}" y="20" text-anchor="middle" font-size="15">{}</text>"#,
                width / 2.0,
                escape(t)
            );
        }
        for (i, p) in self.panels.iter().enumerate() {
            let ox = (i % self.cols) as f64 * self.panel_width;
            let oy = head + (i / self.cols) as f64 * self.panel_height;
            self.render_panel(&mut out, p, ox, oy);
        }
        out.push_str("</svg>\n");
        out
    }

    fn render_panel(&self, out: &mut String, p: &Panel, ox: f64, oy: f64) {
        let x0 = ox + MARGIN_LEFT;
        let y0 = oy + MARGIN_TOP;
        let w = self.panel_width - MARGIN_LEFT - MARGIN_RIGHT;
        let h = self.panel_height - MARGIN_TOP - MARGIN_BOTTOM;
        let (xl, xh) = p.x_range;
        let (yl, yh) = p.y_range;
        let sx = |v: f64| x0 + (v - xl) / (xh - xl) * w;
        let sy = |v: f64| y0 + h - (v - yl) / (yh - yl) * h;

        let _ = writeln!(out, "<g>");
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-size="12">{}</text>"#,
            x0 + w / 2.0,
            oy + 16.0,
            escape(&p.title)
        );
        let _ = writeln!(
            out,
            r##"<rect x="{x0:.1}" y="{y0:.1}" width="{w:.1}" height="{h:.1}" fill="none" stroke="#444"/>"##
        );
        for t in ticks(xl, xh, 5) {
            let x = sx(t);
            let _ = writeln!(
                out,
                r##"<line x1="{x:.1}" y1="{:.1}" x2="{x:.1}" y2="{:.1}" stroke="#444"/><text x="{x:.1}" y="{:.1}" text-anchor="middle">{}</text>"##,
                y0 + h,
                y0 + h + 4.0,
                y0 + h + 15.0,
                tick_label(t)
            );
        }
        for t in ticks(yl, yh, 5) {
            let y = sy(t);
            let _ = writeln!(
                out,
                r##"<line x1="{:.1}" y1="{y:.1}" x2="{x0:.1}" y2="{y:.1}" stroke="#444"/><text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"##,
                x0 - 4.0,
                x0 - 6.0,
                y + 4.0,
                tick_label(t)
            );
        }
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            x0 + w / 2.0,
            y0 + h + 32.0,
            escape(&p.x_label)
        );
        let (lx, ly) = (ox + 14.0, y0 + h / 2.0);
        let _ = writeln!(
            out,
            r#"<text x="{lx:.1}" y="{ly:.1}" text-anchor="middle" transform="rotate(-90 {lx:.1} {ly:.1})">{}</text>"#,
            escape(&p.y_label)
        );

        let clip = format!("clip{}_{}", ox as i64, oy as i64);
        let _ = writeln!(
            out,
            r#"<clipPath id="{clip}"><rect x="{x0:.1}" y="{y0:.1}" width="{w:.1}" height="{h:.1}"/></clipPath>"#
        );
        let _ = writeln!(out, r#"<g clip-path="url(#{clip})">"#);
        let mut legend_row = 0;
        for item in &p.items {
            match item {
                Item::Line {
                    points,
                    color,
                    width,
                    opacity,
                    dashed,
                } => {
                    let mut pts = String::new();
                    for &(x, y) in points.iter().filter(|(x, y)| x.is_finite() && y.is_finite()) {
                        let _ = write!(pts, "{:.2},{:.2} ", sx(x), sy(y));
                    }
                    let dash = if *dashed { r#" stroke-dasharray="5,4""# } else { "" };
                    let _ = writeln!(
                        out,
                        r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="{width}" stroke-opacity="{opacity}"{dash}/>"#,
                        pts.trim_end()
                    );
                }
                Item::Points {
                    points,
                    color,
                    radius,
                    opacity,
                } => {
                    let _ = writeln!(out, r#"<g fill="{color}" fill-opacity="{opacity}">"#);
                    for &(x, y) in points.iter().filter(|(x, y)| x.is_finite() && y.is_finite()) {
                        let _ = writeln!(out, r#"<circle cx="{:.2}" cy="{:.2}" r="{radius}"/>"#, sx(x), sy(y));
                    }
                    let _ = writeln!(out, "</g>");
                }
                Item::Legend { label, color } => {
                    let y = y0 + 14.0 + 14.0 * legend_row as f64;
                    let x = x0 + w - 8.0;
                    let _ = writeln!(
                        out,
                        r#"<line x1="{:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="{color}" stroke-width="2"/><text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
                        x - 16.0,
                        y - 4.0,
                        x,
                        y - 4.0,
                        x - 20.0,
                        y,
                        escape(label)
                    );
                    legend_row += 1;
                }
            }
        }
        let _ = writeln!(out, "</g>\n</g>");
    }
}
