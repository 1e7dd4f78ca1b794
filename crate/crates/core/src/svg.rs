//! Minimal SVG line plots: polyline series with point markers, linear or
//! log-10 axes with nice ticks, optional error bars, labeled vertical
//! reference lines, and a legend. Output is a standalone `<svg>` document
//! with no external dependencies.

use crate::error::Error;
use crate::Result;

/// Fixed series palette, cycled when a plot has more series.
const PALETTE: [&str; 6] = [
    "#1f6fb2", "#d1495b", "#3d9970", "#edae49", "#7d5ba6", "#5f6b7a",
];

/// One plotted curve: points in data coordinates plus optional symmetric
/// error-bar half-widths (empty, or one per point).
#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    pub bars: Vec<f64>,
}

impl Series {
    pub fn new(label: impl Into<String>, points: Vec<(f64, f64)>) -> Self {
        Series {
            label: label.into(),
            points,
            bars: Vec::new(),
        }
    }

    pub fn with_bars(mut self, bars: Vec<f64>) -> Self {
        self.bars = bars;
        self
    }
}

/// A line plot under construction; `render` produces the SVG text.
#[derive(Debug, Clone)]
pub struct LinePlot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
    /// Log-10 scale on the horizontal axis (requires positive x values).
    pub log_x: bool,
    /// Log-10 scale on the vertical axis (requires positive y values).
    pub log_y: bool,
    /// Labeled vertical reference lines at data x positions.
    pub vlines: Vec<(String, f64)>,
    pub width: f64,
    pub height: f64,
}

impl LinePlot {
    pub fn new(
        title: impl Into<String>,
        x_label: impl Into<String>,
        y_label: impl Into<String>,
    ) -> Self {
        LinePlot {
            title: title.into(),
            x_label: x_label.into(),
            y_label: y_label.into(),
            series: Vec::new(),
            log_x: false,
            log_y: false,
            vlines: Vec::new(),
            width: 640.0,
            height: 420.0,
        }
    }

    pub fn push_series(&mut self, series: Series) -> &mut Self {
        self.series.push(series);
        self
    }

    pub fn push_vline(&mut self, label: impl Into<String>, x: f64) -> &mut Self {
        self.vlines.push((label.into(), x));
        self
    }

    /// Render the plot as a self-contained SVG document.
    pub fn render(&self) -> Result<String> {
        if self.series.is_empty() {
            return Err(Error::Config("plot needs at least one series".into()));
        }
        for s in &self.series {
            if s.points.is_empty() {
                return Err(Error::Config(format!(
                    "series {:?} has no points",
                    s.label
                )));
            }
            if !s.bars.is_empty() && s.bars.len() != s.points.len() {
                return Err(Error::Config(format!(
                    "series {:?} carries {} error bars for {} points",
                    s.label,
                    s.bars.len(),
                    s.points.len()
                )));
            }
            for &(x, y) in &s.points {
                if !x.is_finite() || !y.is_finite() {
                    return Err(Error::Config(format!(
                        "series {:?} contains a non-finite point",
                        s.label
                    )));
                }
                if self.log_x && x <= 0.0 {
                    return Err(Error::Config(
                        "log-scaled x axis needs positive x values".into(),
                    ));
                }
                if self.log_y && y <= 0.0 {
                    return Err(Error::Config(
                        "log-scaled y axis needs positive y values".into(),
                    ));
                }
            }
        }

        let tx = |v: f64| if self.log_x { v.log10() } else { v };
        let ty = |v: f64| if self.log_y { v.log10() } else { v };

        // data ranges in (possibly transformed) axis coordinates, error bars
        // and vertical markers included
        let mut x_min = f64::INFINITY;
        let mut x_max = f64::NEG_INFINITY;
        let mut y_min = f64::INFINITY;
        let mut y_max = f64::NEG_INFINITY;
        for s in &self.series {
            for (i, &(x, y)) in s.points.iter().enumerate() {
                x_min = x_min.min(tx(x));
                x_max = x_max.max(tx(x));
                let bar = s.bars.get(i).copied().unwrap_or(0.0);
                let (lo, hi) = if self.log_y {
                    // clamp the lower bar end to stay on the log scale
                    let lo = (y - bar).max(y * 1e-3);
                    (ty(lo), ty(y + bar))
                } else {
                    (ty(y - bar), ty(y + bar))
                };
                y_min = y_min.min(lo);
                y_max = y_max.max(hi);
            }
        }
        for &(_, x) in &self.vlines {
            if self.log_x && x <= 0.0 {
                return Err(Error::Config(
                    "log-scaled x axis needs positive marker positions".into(),
                ));
            }
            x_min = x_min.min(tx(x));
            x_max = x_max.max(tx(x));
        }
        if x_max <= x_min {
            let pad = if x_min == 0.0 { 0.5 } else { x_min.abs() * 0.1 };
            x_min -= pad;
            x_max += pad;
        }
        if y_max <= y_min {
            let pad = if y_min == 0.0 { 0.5 } else { y_min.abs() * 0.1 };
            y_min -= pad;
            y_max += pad;
        }

        let (left, right, top, bottom) = (64.0, 18.0, 34.0, 52.0);
        let pw = self.width - left - right;
        let ph = self.height - top - bottom;
        let px = |v: f64| left + (tx(v) - x_min) / (x_max - x_min) * pw;
        let py = |v: f64| top + (y_max - ty(v)) / (y_max - y_min) * ph;
        // axis-coordinate versions for ticks (already transformed)
        let pxa = |a: f64| left + (a - x_min) / (x_max - x_min) * pw;
        let pya = |a: f64| top + (y_max - a) / (y_max - y_min) * ph;

        let mut out = String::new();
        out.push_str(&format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" \
             viewBox=\"0 0 {w} {h}\" font-family=\"sans-serif\" font-size=\"12\">\n",
            w = self.width,
            h = self.height
        ));
        out.push_str(&format!(
            "<rect width=\"{}\" height=\"{}\" fill=\"#ffffff\"/>\n",
            self.width, self.height
        ));
        out.push_str(&format!(
            "<text x=\"{:.2}\" y=\"20\" text-anchor=\"middle\" font-size=\"14\" \
             fill=\"#222\">{}</text>\n",
            left + pw / 2.0,
            escape(&self.title)
        ));

        // gridlines and ticks
        let x_ticks = if self.log_x {
            decade_ticks(x_min, x_max)
        } else {
            nice_ticks(x_min, x_max, 6)
        };
        let y_ticks = if self.log_y {
            decade_ticks(y_min, y_max)
        } else {
            nice_ticks(y_min, y_max, 6)
        };
        for &t in &y_ticks {
            let y = pya(t);
            out.push_str(&format!(
                "<line x1=\"{left}\" y1=\"{y:.2}\" x2=\"{:.2}\" y2=\"{y:.2}\" \
                 stroke=\"#e3e3e3\"/>\n",
                left + pw
            ));
            out.push_str(&format!(
                "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\" fill=\"#444\">{}</text>\n",
                left - 6.0,
                y + 4.0,
                tick_label(t, self.log_y)
            ));
        }
        for &t in &x_ticks {
            let x = pxa(t);
            out.push_str(&format!(
                "<line x1=\"{x:.2}\" y1=\"{:.2}\" x2=\"{x:.2}\" y2=\"{:.2}\" \
                 stroke=\"#e3e3e3\"/>\n",
                top,
                top + ph
            ));
            out.push_str(&format!(
                "<text x=\"{x:.2}\" y=\"{:.2}\" text-anchor=\"middle\" fill=\"#444\">{}</text>\n",
                top + ph + 18.0,
                tick_label(t, self.log_x)
            ));
        }

        // axes frame
        out.push_str(&format!(
            "<rect x=\"{left}\" y=\"{top}\" width=\"{pw:.2}\" height=\"{ph:.2}\" \
             fill=\"none\" stroke=\"#888\"/>\n"
        ));
        out.push_str(&format!(
            "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\" fill=\"#222\">{}</text>\n",
            left + pw / 2.0,
            self.height - 14.0,
            escape(&self.x_label)
        ));
        out.push_str(&format!(
            "<text x=\"16\" y=\"{:.2}\" text-anchor=\"middle\" fill=\"#222\" \
             transform=\"rotate(-90 16 {:.2})\">{}</text>\n",
            top + ph / 2.0,
            top + ph / 2.0,
            escape(&self.y_label)
        ));

        // vertical reference lines
        for (label, x) in &self.vlines {
            let xp = px(*x);
            out.push_str(&format!(
                "<line x1=\"{xp:.2}\" y1=\"{top}\" x2=\"{xp:.2}\" y2=\"{:.2}\" \
                 stroke=\"#999\" stroke-dasharray=\"5 3\"/>\n",
                top + ph
            ));
            out.push_str(&format!(
                "<text x=\"{:.2}\" y=\"{:.2}\" fill=\"#666\" font-size=\"11\">{}</text>\n",
                xp + 4.0,
                top + 12.0,
                escape(label)
            ));
        }

        // series: error bars under the line, then the polyline, then markers
        for (si, s) in self.series.iter().enumerate() {
            let color = PALETTE[si % PALETTE.len()];
            for (i, &(x, y)) in s.points.iter().enumerate() {
                let bar = s.bars.get(i).copied().unwrap_or(0.0);
                if bar > 0.0 {
                    let lo = if self.log_y {
                        (y - bar).max(y * 1e-3)
                    } else {
                        y - bar
                    };
                    let (xp, y1, y2) = (px(x), py(y + bar), py(lo));
                    out.push_str(&format!(
                        "<line class=\"bar\" x1=\"{xp:.2}\" y1=\"{y1:.2}\" x2=\"{xp:.2}\" \
                         y2=\"{y2:.2}\" stroke=\"{color}\" stroke-width=\"1\"/>\n"
                    ));
                    for yy in [y1, y2] {
                        out.push_str(&format!(
                            "<line class=\"bar\" x1=\"{:.2}\" y1=\"{yy:.2}\" x2=\"{:.2}\" \
                             y2=\"{yy:.2}\" stroke=\"{color}\" stroke-width=\"1\"/>\n",
                            xp - 3.0,
                            xp + 3.0
                        ));
                    }
                }
            }
            let pts: Vec<String> = s
                .points
                .iter()
                .map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y)))
                .collect();
            out.push_str(&format!(
                "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" \
                 stroke-width=\"1.8\"/>\n",
                pts.join(" ")
            ));
            for &(x, y) in &s.points {
                out.push_str(&format!(
                    "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3\" fill=\"{color}\"/>\n",
                    px(x),
                    py(y)
                ));
            }
        }

        // legend, top-right inside the frame
        let lx = left + pw - 10.0;
        for (si, s) in self.series.iter().enumerate() {
            let color = PALETTE[si % PALETTE.len()];
            let ly = top + 16.0 + si as f64 * 16.0;
            out.push_str(&format!(
                "<line x1=\"{:.2}\" y1=\"{ly:.2}\" x2=\"{:.2}\" y2=\"{ly:.2}\" \
                 stroke=\"{color}\" stroke-width=\"2\"/>\n",
                lx - 88.0,
                lx - 66.0
            ));
            out.push_str(&format!(
                "<text x=\"{:.2}\" y=\"{:.2}\" fill=\"#333\" font-size=\"11\">{}</text>\n",
                lx - 60.0,
                ly + 4.0,
                escape(&s.label)
            ));
        }

        out.push_str("</svg>\n");
        Ok(out)
    }
}

/// Escape text content for SVG.
fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Round-number ticks covering `[min, max]` with roughly `target` steps;
/// steps are 1, 2, or 5 times a power of ten.
fn nice_ticks(min: f64, max: f64, target: usize) -> Vec<f64> {
    debug_assert!(max > min);
    let raw = (max - min) / target.max(1) as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let norm = raw / mag;
    let step = if norm <= 1.5 {
        1.0
    } else if norm <= 3.0 {
        2.0
    } else if norm <= 7.0 {
        5.0
    } else {
        10.0
    } * mag;
    let mut ticks = Vec::new();
    let mut t = (min / step).ceil() * step;
    let eps = step * 1e-9;
    while t <= max + eps {
        // snap values like 0.30000000000000004 back onto the grid
        ticks.push((t / step).round() * step);
        t += step;
    }
    ticks
}

/// Integer-decade positions (log-10 axis coordinates) covering the range;
/// falls back to linear ticks in log-space when the span is under a decade.
fn decade_ticks(min: f64, max: f64) -> Vec<f64> {
    let lo = min.ceil() as i64;
    let hi = max.floor() as i64;
    if hi < lo {
        return nice_ticks(min, max, 4);
    }
    (lo..=hi).map(|k| k as f64).collect()
}

/// Format an axis-coordinate tick for display; log-axis ticks are shown as
/// the original data value.
fn tick_label(t: f64, log_axis: bool) -> String {
    let v = if log_axis { 10f64.powf(t) } else { t };
    if v != 0.0 && (v.abs() >= 1e5 || v.abs() < 1e-4) {
        format!("{v:.0e}")
    } else {
        let s = format!("{v:.6}");
        let s = s.trim_end_matches('0').trim_end_matches('.');
        s.to_string()
    }
}
