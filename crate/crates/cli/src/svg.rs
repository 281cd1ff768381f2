//! Minimal SVG plots: bar charts with error bars, heatmaps and line charts.

use std::fmt::Write;

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

pub struct Bars {
    pub title: String,
    pub labels: Vec<String>,
    pub values: Vec<f64>,
    /// Optional (low, high) per bar.
    pub errors: Vec<Option<(f64, f64)>>,
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn open(w: f64, h: f64) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\" \
         font-family=\"sans-serif\" font-size=\"11\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    )
}

/// Bars on a [0, 1] axis drawn into a `w`×`h` box at the origin.
fn bars_group(b: &Bars, w: f64, h: f64) -> String {
    let (left, right, top, bottom) = (40.0, 10.0, 24.0, 70.0);
    let pw = w - left - right;
    let ph = h - top - bottom;
    let y = |v: f64| top + ph * (1.0 - v.clamp(0.0, 1.0));
    let mut s = String::new();
    let _ = writeln!(s, "<text x=\"{}\" y=\"15\" text-anchor=\"middle\" font-size=\"13\">{}</text>", w / 2.0, esc(&b.title));
    for t in 0..=4 {
        let v = t as f64 / 4.0;
        let _ = writeln!(
            s,
            "<line x1=\"{left}\" x2=\"{}\" y1=\"{yy:.2}\" y2=\"{yy:.2}\" stroke=\"#ddd\"/><text x=\"{}\" y=\"{:.2}\" text-anchor=\"end\">{v:.2}</text>",
            left + pw,
            left - 4.0,
            y(v) + 4.0,
            yy = y(v)
        );
    }
    let n = b.values.len().max(1) as f64;
    let slot = pw / n;
    for (i, v) in b.values.iter().enumerate() {
        let x = left + slot * i as f64 + slot * 0.15;
        let bw = slot * 0.7;
        let _ = writeln!(
            s,
            "<rect x=\"{x:.2}\" y=\"{:.2}\" width=\"{bw:.2}\" height=\"{:.2}\" fill=\"{}\"/>",
            y(*v),
            top + ph - y(*v),
            PALETTE[0]
        );
        if let Some(Some((lo, hi))) = b.errors.get(i) {
            let cx = x + bw / 2.0;
            let _ = writeln!(
                s,
                "<path d=\"M{cx:.2},{:.2}V{:.2}M{:.2},{:.2}H{:.2}M{:.2},{:.2}H{:.2}\" stroke=\"black\"/>",
                y(*lo),
                y(*hi),
                cx - 4.0,
                y(*lo),
                cx + 4.0,
                cx - 4.0,
                y(*hi),
                cx + 4.0
            );
        }
        let lx = x + bw / 2.0;
        let ly = top + ph + 8.0;
        let _ = writeln!(
            s,
            "<text x=\"{lx:.2}\" y=\"{ly:.2}\" transform=\"rotate(45 {lx:.2} {ly:.2})\">{}</text>",
            esc(&b.labels[i])
        );
    }
    let _ = writeln!(s, "<line x1=\"{left}\" x2=\"{}\" y1=\"{:.2}\" y2=\"{:.2}\" stroke=\"black\"/>", left + pw, top + ph, top + ph);
    s
}

pub fn bar_chart(b: &Bars) -> String {
    let (w, h) = (480.0, 300.0);
    let mut s = open(w, h);
    s.push_str(&bars_group(b, w, h));
    s.push_str("</svg>\n");
    s
}

/// Panels laid out row-major, `cols` per row.
pub fn bar_grid(panels: &[Bars], cols: usize) -> String {
    let (pw, ph) = (360.0, 260.0);
    let cols = cols.max(1);
    let rows = panels.len().div_ceil(cols).max(1);
    let mut s = open(pw * cols as f64, ph * rows as f64);
    for (i, p) in panels.iter().enumerate() {
        let (cx, cy) = ((i % cols) as f64 * pw, (i / cols) as f64 * ph);
        let _ = writeln!(s, "<g transform=\"translate({cx},{cy})\">");
        s.push_str(&bars_group(p, pw, ph));
        s.push_str("</g>\n");
    }
    s.push_str("</svg>\n");
    s
}

fn ramp(v: f64) -> String {
    let t = v.clamp(0.0, 1.0);
    let lerp = |a: f64, b: f64| (a + (b - a) * t).round() as u8;
    format!("#{:02x}{:02x}{:02x}", lerp(68.0, 253.0), lerp(1.0, 231.0), lerp(84.0, 37.0))
}

/// Grid of values in [0, 1]; `None` cells are drawn gray. `cells` is
/// row-major with row 0 at the bottom.
pub fn heatmap(title: &str, nx: usize, ny: usize, cells: &[Option<f64>]) -> String {
    let px = (480.0 / nx.max(ny).max(1) as f64).floor().max(4.0);
    let (left, top) = (10.0, 28.0);
    let w = left * 2.0 + px * nx as f64 + 70.0;
    let h = top + px * ny as f64 + 10.0;
    let mut s = open(w, h);
    let _ = writeln!(s, "<text x=\"{left}\" y=\"18\" font-size=\"13\">{}</text>", esc(title));
    for iy in 0..ny {
        for ix in 0..nx {
            let fill = cells[iy * nx + ix].map_or_else(|| "#bbbbbb".to_string(), ramp);
            let _ = writeln!(
                s,
                "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"{px}\" height=\"{px}\" fill=\"{fill}\"/>",
                left + px * ix as f64,
                top + px * (ny - 1 - iy) as f64
            );
        }
    }
    let lx = left + px * nx as f64 + 16.0;
    for t in 0..=4 {
        let v = t as f64 / 4.0;
        let yy = top + 100.0 * (1.0 - v);
        let _ = writeln!(
            s,
            "<rect x=\"{lx}\" y=\"{yy:.2}\" width=\"12\" height=\"25\" fill=\"{}\"/><text x=\"{}\" y=\"{:.2}\">{v:.2}</text>",
            ramp(v),
            lx + 16.0,
            yy + 4.0
        );
    }
    s.push_str("</svg>\n");
    s
}

pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

pub fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let (w, h) = (560.0, 340.0);
    let (left, right, top, bottom) = (56.0, 120.0, 28.0, 40.0);
    let pw = w - left - right;
    let ph = h - top - bottom;
    let pts = series.iter().flat_map(|s| s.points.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 <= x0 {
        x1 = x0 + 1.0;
    }
    if y1 <= y0 {
        y1 = y0 + 1.0;
    }
    let sx = |x: f64| left + pw * (x - x0) / (x1 - x0);
    let sy = |y: f64| top + ph * (1.0 - (y - y0) / (y1 - y0));
    let mut s = open(w, h);
    let _ = writeln!(s, "<text x=\"{}\" y=\"18\" text-anchor=\"middle\" font-size=\"13\">{}</text>", left + pw / 2.0, esc(title));
    for t in 0..=4 {
        let v = y0 + (y1 - y0) * t as f64 / 4.0;
        let _ = writeln!(
            s,
            "<line x1=\"{left}\" x2=\"{:.2}\" y1=\"{yy:.2}\" y2=\"{yy:.2}\" stroke=\"#ddd\"/><text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\">{v:.1}</text>",
            left + pw,
            left - 4.0,
            sy(v) + 4.0,
            yy = sy(v)
        );
        let xv = x0 + (x1 - x0) * t as f64 / 4.0;
        let _ = writeln!(s, "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{xv:.0}</text>", sx(xv), top + ph + 14.0);
    }
    let _ = writeln!(s, "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{}</text>", left + pw / 2.0, h - 6.0, esc(x_label));
    let _ = writeln!(
        s,
        "<text x=\"12\" y=\"{:.2}\" transform=\"rotate(-90 12 {:.2})\" text-anchor=\"middle\">{}</text>",
        top + ph / 2.0,
        top + ph / 2.0,
        esc(y_label)
    );
    for (i, se) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let d: Vec<String> = se.points.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
        if !d.is_empty() {
            let _ = writeln!(s, "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"2\"/>", d.join(" "));
        }
        let ly = top + 14.0 + 16.0 * i as f64;
        let _ = writeln!(
            s,
            "<line x1=\"{:.2}\" x2=\"{:.2}\" y1=\"{ly:.2}\" y2=\"{ly:.2}\" stroke=\"{color}\" stroke-width=\"2\"/><text x=\"{:.2}\" y=\"{:.2}\">{}</text>",
            left + pw + 10.0,
            left + pw + 30.0,
            left + pw + 34.0,
            ly + 4.0,
            esc(&se.name)
        );
    }
    s.push_str("</svg>\n");
    s
}
