//! Minimal deterministic SVG charts: lines and markers on linear axes.

use std::fmt::Write;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const LEFT: f64 = 72.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 56.0;

const PALETTE: [&str; 10] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    "#bcbd22", "#17becf",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mark {
    Line,
    Dots,
}

#[derive(Debug, Clone)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
    pub mark: Mark,
}

#[derive(Debug, Clone)]
pub struct Chart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
    /// Text placed next to single points (index into `series`, point, text).
    pub annotations: Vec<(usize, usize, String)>,
}

fn fmt(v: f64) -> String {
    format!("{v:.2}")
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Tick values covering `[lo, hi]` with a 1-2-5 step.
fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    let span = (hi - lo).max(1e-12);
    let raw = span / 6.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| *s >= raw)
        .unwrap_or(10.0 * mag);
    let mut out = Vec::new();
    let mut v = (lo / step).ceil() * step;
    while v <= hi + 1e-9 * span {
        out.push(if v.abs() < 1e-12 * step { 0.0 } else { v });
        v += step;
    }
    out
}

fn tick_label(v: f64) -> String {
    let s = format!("{v:.6}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" { "0".into() } else { s.into() }
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        let pad = lo.abs().max(1.0) * 0.05;
        return (lo - pad, hi + pad);
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

impl Chart {
    pub fn render(&self) -> String {
        let (x0, x1) = range(self.series.iter().flat_map(|s| s.points.iter().map(|p| p.0)));
        let (y0, y1) = range(self.series.iter().flat_map(|s| s.points.iter().map(|p| p.1)));
        let pw = WIDTH - LEFT - RIGHT;
        let ph = HEIGHT - TOP - BOTTOM;
        let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
        let sy = |y: f64| TOP + (1.0 - (y - y0) / (y1 - y0)) * ph;

        let mut o = String::new();
        let _ = writeln!(
            o,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#,
            w = WIDTH,
            h = HEIGHT
        );
        let _ = writeln!(o, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = writeln!(
            o,
            r#"<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>"#,
            fmt(LEFT + pw / 2.0),
            escape(&self.title)
        );
        let _ = writeln!(
            o,
            r##"<rect x="{}" y="{}" width="{}" height="{}" fill="none" stroke="#333"/>"##,
            fmt(LEFT),
            fmt(TOP),
            fmt(pw),
            fmt(ph)
        );
        for t in ticks(x0, x1) {
            let x = sx(t);
            let _ = writeln!(
                o,
                r##"<line x1="{x}" y1="{a}" x2="{x}" y2="{b}" stroke="#ddd"/><text x="{x}" y="{c}" text-anchor="middle">{l}</text>"##,
                x = fmt(x),
                a = fmt(TOP),
                b = fmt(TOP + ph),
                c = fmt(TOP + ph + 16.0),
                l = tick_label(t)
            );
        }
        for t in ticks(y0, y1) {
            let y = sy(t);
            let _ = writeln!(
                o,
                r##"<line x1="{a}" y1="{y}" x2="{b}" y2="{y}" stroke="#ddd"/><text x="{c}" y="{ty}" text-anchor="end">{l}</text>"##,
                y = fmt(y),
                a = fmt(LEFT),
                b = fmt(LEFT + pw),
                c = fmt(LEFT - 6.0),
                ty = fmt(y + 4.0),
                l = tick_label(t)
            );
        }
        let _ = writeln!(
            o,
            r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
            fmt(LEFT + pw / 2.0),
            fmt(HEIGHT - 14.0),
            escape(&self.x_label)
        );
        let _ = writeln!(
            o,
            r#"<text transform="translate(18,{}) rotate(-90)" text-anchor="middle">{}</text>"#,
            fmt(TOP + ph / 2.0),
            escape(&self.y_label)
        );
        for (k, s) in self.series.iter().enumerate() {
            let color = PALETTE[k % PALETTE.len()];
            match s.mark {
                Mark::Line => {
                    let pts: Vec<String> = s
                        .points
                        .iter()
                        .filter(|p| p.0.is_finite() && p.1.is_finite())
                        .map(|&(x, y)| format!("{},{}", fmt(sx(x)), fmt(sy(y))))
                        .collect();
                    let _ = writeln!(
                        o,
                        r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
                        pts.join(" ")
                    );
                }
                Mark::Dots => {
                    for &(x, y) in s.points.iter().filter(|p| p.0.is_finite() && p.1.is_finite()) {
                        let _ = writeln!(
                            o,
                            r#"<circle cx="{}" cy="{}" r="2.5" fill="{color}" fill-opacity="0.6"/>"#,
                            fmt(sx(x)),
                            fmt(sy(y))
                        );
                    }
                }
            }
            let ly = TOP + 14.0 + 18.0 * k as f64;
            let lx = LEFT + pw + 12.0;
            let _ = writeln!(
                o,
                r#"<rect x="{}" y="{}" width="12" height="4" fill="{color}"/><text x="{}" y="{}">{}</text>"#,
                fmt(lx),
                fmt(ly - 4.0),
                fmt(lx + 18.0),
                fmt(ly + 2.0),
                escape(&s.name)
            );
        }
        for (k, i, text) in &self.annotations {
            if let Some(&(x, y)) = self.series.get(*k).and_then(|s| s.points.get(*i)) {
                if x.is_finite() && y.is_finite() {
                    let _ = writeln!(
                        o,
                        r#"<text x="{}" y="{}" font-size="10">{}</text>"#,
                        fmt(sx(x) + 5.0),
                        fmt(sy(y) - 5.0),
                        escape(text)
                    );
                }
            }
        }
        o.push_str("</svg>\n");
        o
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ticks_cover_range() {
        assert_eq!(ticks(0.0, 1.0), vec![0.0, 0.2, 0.4, 0.6000000000000001, 0.8, 1.0]);
        let t = ticks(47.3, 50.2);
        assert!(t.first().unwrap() >= &47.3 && t.last().unwrap() <= &50.2);
    }

    #[test]
    fn render_is_deterministic() {
        let chart = Chart {
            title: "a < b".into(),
            x_label: "x".into(),
            y_label: "y".into(),
            series: vec![Series {
                name: "s".into(),
                points: vec![(0.0, 1.0), (1.0, 2.0)],
                mark: Mark::Line,
            }],
            annotations: vec![(0, 1, "end".into())],
        };
        let a = chart.render();
        assert_eq!(a, chart.render());
        assert!(a.contains("a &lt; b"));
        assert!(a.starts_with("<svg"));
    }
}
