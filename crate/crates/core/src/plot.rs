//! Minimal static SVG line charts.

use std::fmt::Write;

pub const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 70.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;

#[derive(Clone, Debug)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
    pub dashed: bool,
    pub color: &'static str,
}

#[derive(Clone, Copy)]
struct Range {
    lo: f64,
    hi: f64,
}

impl Range {
    fn of<'a>(values: impl Iterator<Item = &'a f64>) -> Self {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for &v in values.filter(|v| v.is_finite()) {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if !lo.is_finite() {
            return Range { lo: 0.0, hi: 1.0 };
        }
        if hi - lo < 1e-12 {
            let pad = if lo.abs() > 0.0 { lo.abs() * 0.1 } else { 1.0 };
            return Range { lo: lo - pad, hi: hi + pad };
        }
        Range { lo, hi }
    }

    fn with_zero(self) -> Self {
        Range {
            lo: self.lo.min(0.0),
            hi: self.hi.max(0.0),
        }
    }

    fn map(&self, v: f64, from: f64, to: f64) -> f64 {
        from + (v - self.lo) / (self.hi - self.lo) * (to - from)
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn fmt_tick(v: f64) -> String {
    if v.abs() >= 100.0 || v == v.round() {
        format!("{v:.0}")
    } else if v.abs() >= 1.0 {
        format!("{v:.1}")
    } else {
        format!("{v:.3}")
    }
}

fn header(svg: &mut String, title: &str, x_label: &str, y_label: &str) {
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        LEFT + (WIDTH - LEFT - RIGHT) / 2.0,
        HEIGHT - 15.0,
        escape(x_label)
    );
    let _ = writeln!(
        svg,
        r#"<text transform="translate(18,{}) rotate(-90)" text-anchor="middle">{}</text>"#,
        TOP + (HEIGHT - TOP - BOTTOM) / 2.0,
        escape(y_label)
    );
    let _ = writeln!(
        svg,
        r#"<rect x="{LEFT}" y="{TOP}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        WIDTH - LEFT - RIGHT,
        HEIGHT - TOP - BOTTOM
    );
}

fn x_ticks(svg: &mut String, x: Range) {
    for i in 0..=5 {
        let v = x.lo + (x.hi - x.lo) * i as f64 / 5.0;
        let px = x.map(v, LEFT, WIDTH - RIGHT);
        let _ = writeln!(
            svg,
            r#"<line x1="{px:.1}" y1="{}" x2="{px:.1}" y2="{}" stroke="black"/><text x="{px:.1}" y="{}" text-anchor="middle">{}</text>"#,
            HEIGHT - BOTTOM,
            HEIGHT - BOTTOM + 5.0,
            HEIGHT - BOTTOM + 18.0,
            fmt_tick(v)
        );
    }
}

fn y_ticks(svg: &mut String, y: Range, right_side: bool) {
    for i in 0..=5 {
        let v = y.lo + (y.hi - y.lo) * i as f64 / 5.0;
        let py = y.map(v, HEIGHT - BOTTOM, TOP);
        let (x0, x1, tx, anchor) = if right_side {
            (WIDTH - RIGHT, WIDTH - RIGHT + 5.0, WIDTH - RIGHT + 8.0, "start")
        } else {
            (LEFT - 5.0, LEFT, LEFT - 8.0, "end")
        };
        let _ = writeln!(
            svg,
            r#"<line x1="{x0}" y1="{py:.1}" x2="{x1}" y2="{py:.1}" stroke="black"/><text x="{tx}" y="{:.1}" text-anchor="{anchor}">{}</text>"#,
            py + 4.0,
            fmt_tick(v)
        );
    }
}

fn polyline(svg: &mut String, s: &Series, x: Range, y: Range) {
    if s.points.is_empty() {
        return;
    }
    let pts: Vec<String> = s
        .points
        .iter()
        .filter(|(_, v)| v.is_finite())
        .map(|&(a, b)| format!("{:.1},{:.1}", x.map(a, LEFT, WIDTH - RIGHT), y.map(b, HEIGHT - BOTTOM, TOP)))
        .collect();
    let dash = if s.dashed { r#" stroke-dasharray="6,4""# } else { "" };
    let _ = writeln!(
        svg,
        r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="1.5"{dash}/>"#,
        pts.join(" "),
        s.color
    );
}

fn legend(svg: &mut String, series: &[&Series]) {
    for (i, s) in series.iter().enumerate() {
        let y = TOP + 14.0 + 16.0 * i as f64;
        let x = LEFT + 10.0;
        let dash = if s.dashed { r#" stroke-dasharray="6,4""# } else { "" };
        let _ = writeln!(
            svg,
            r#"<line x1="{x}" y1="{y}" x2="{}" y2="{y}" stroke="{}" stroke-width="2"{dash}/><text x="{}" y="{}">{}</text>"#,
            x + 24.0,
            s.color,
            x + 30.0,
            y + 4.0,
            escape(&s.name)
        );
    }
}

fn x_range(series: &[&Series]) -> Range {
    Range::of(series.iter().flat_map(|s| s.points.iter().map(|(x, _)| x)))
}

pub fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let all: Vec<&Series> = series.iter().collect();
    let x = x_range(&all);
    let y = Range::of(series.iter().flat_map(|s| s.points.iter().map(|(_, y)| y))).with_zero();
    let mut svg = String::new();
    header(&mut svg, title, x_label, y_label);
    x_ticks(&mut svg, x);
    y_ticks(&mut svg, y, false);
    for s in series {
        polyline(&mut svg, s, x, y);
    }
    legend(&mut svg, &all);
    svg.push_str("</svg>\n");
    svg
}

/// `left` series on the left axis, `right` series on a second right-hand axis.
pub fn dual_axis_chart(
    title: &str,
    x_label: &str,
    left_label: &str,
    right_label: &str,
    left: &[Series],
    right: &[Series],
) -> String {
    let all: Vec<&Series> = left.iter().chain(right).collect();
    let x = x_range(&all);
    let yl = Range::of(left.iter().flat_map(|s| s.points.iter().map(|(_, y)| y))).with_zero();
    let yr = Range::of(right.iter().flat_map(|s| s.points.iter().map(|(_, y)| y))).with_zero();
    let mut svg = String::new();
    header(&mut svg, title, x_label, left_label);
    let _ = writeln!(
        svg,
        r#"<text transform="translate({},{}) rotate(90)" text-anchor="middle">{}</text>"#,
        WIDTH - 18.0,
        TOP + (HEIGHT - TOP - BOTTOM) / 2.0,
        escape(right_label)
    );
    x_ticks(&mut svg, x);
    y_ticks(&mut svg, yl, false);
    y_ticks(&mut svg, yr, true);
    for s in left {
        polyline(&mut svg, s, x, yl);
    }
    for s in right {
        polyline(&mut svg, s, x, yr);
    }
    legend(&mut svg, &all);
    svg.push_str("</svg>\n");
    svg
}
