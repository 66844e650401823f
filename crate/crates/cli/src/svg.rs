//! Minimal deterministic SVG plots.

use std::fmt::Write;

const W: f64 = 720.0;
const H: f64 = 520.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 190.0;
const TOP: f64 = 50.0;
const BOTTOM: f64 = 60.0;

pub struct Series {
    pub name: String,
    pub color: String,
    pub points: Vec<(f64, f64)>,
    pub hollow: bool,
    pub connect: bool,
}

pub struct Bar {
    pub name: String,
    pub shares: Vec<f64>,
    pub highlight: bool,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Stable color keyed by the asset label (FNV-1a hash to a hue).
pub fn label_color(label: &str) -> String {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in label.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    format!("hsl({},{}%,{}%)", h % 360, 45 + (h >> 16) % 30, 40 + (h >> 32) % 20)
}

pub const PALETTE: [&str; 6] = ["#1f77b4", "#ff7f0e", "#2ca02c", "#9467bd", "#8c564b", "#e377c2"];

fn header(out: &mut String, width: f64, height: f64, title: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="{width}" height="{height}" fill="white"/>"#);
    let _ = writeln!(out, r#"<text x="{}" y="28" font-size="16" text-anchor="middle">{}</text>"#, width / 2.0, escape(title));
}

/// Scatter on the unit square (normalized coordinates).
pub fn scatter(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let (pw, ph) = (W - LEFT - RIGHT, H - TOP - BOTTOM);
    let sx = |x: f64| LEFT + x * pw;
    let sy = |y: f64| TOP + (1.0 - y) * ph;
    let mut out = String::new();
    header(&mut out, W, H, title);
    for k in 0..=4 {
        let t = k as f64 / 4.0;
        let _ = writeln!(
            out,
            r##"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="#e0e0e0"/>"##,
            sx(0.0),
            sy(t),
            sx(1.0),
            sy(t)
        );
        let _ = writeln!(
            out,
            r##"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="#e0e0e0"/>"##,
            sx(t),
            sy(0.0),
            sx(t),
            sy(1.0)
        );
        let _ = writeln!(out, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{t:.2}</text>"#, sx(t), sy(0.0) + 18.0);
        let _ = writeln!(out, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{t:.2}</text>"#, sx(0.0) - 6.0, sy(t) + 4.0);
    }
    let _ = writeln!(
        out,
        r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    let _ = writeln!(out, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, sx(0.5), H - 18.0, escape(x_label));
    let _ = writeln!(
        out,
        r#"<text x="18" y="{:.2}" text-anchor="middle" transform="rotate(-90 18 {:.2})">{}</text>"#,
        sy(0.5),
        sy(0.5),
        escape(y_label)
    );
    for (k, s) in series.iter().enumerate() {
        if s.connect && s.points.len() > 1 {
            let path: Vec<String> = s.points.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
            let _ = writeln!(
                out,
                r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="1.5"/>"#,
                path.join(" "),
                s.color
            );
        }
        for &(x, y) in &s.points {
            let fill = if s.hollow { "none" } else { s.color.as_str() };
            let _ = writeln!(
                out,
                r#"<circle cx="{:.2}" cy="{:.2}" r="4" fill="{fill}" stroke="{}" stroke-width="1.5"/>"#,
                sx(x),
                sy(y),
                s.color
            );
        }
        let ly = TOP + 10.0 + 20.0 * k as f64;
        let lx = W - RIGHT + 20.0;
        let fill = if s.hollow { "none" } else { s.color.as_str() };
        let _ = writeln!(out, r#"<circle cx="{lx}" cy="{ly}" r="4" fill="{fill}" stroke="{}"/>"#, s.color);
        let _ = writeln!(out, r#"<text x="{}" y="{}">{}</text>"#, lx + 10.0, ly + 4.0, escape(&s.name));
    }
    out.push_str("</svg>\n");
    out
}

/// One stacked bar of shares per solution; highlighted bars are outlined.
pub fn stacked_bars(title: &str, labels: &[String], bars: &[Bar]) -> String {
    let bar_w = 26.0;
    let gap = 14.0;
    let ph = H - TOP - BOTTOM - 40.0;
    let width = (LEFT + bars.len() as f64 * (bar_w + gap) + RIGHT).max(420.0);
    let mut out = String::new();
    header(&mut out, width, H, title);
    let base = TOP + ph;
    for k in 0..=4 {
        let t = k as f64 / 4.0;
        let y = base - t * ph;
        let _ = writeln!(out, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{:.0}%</text>"#, LEFT - 6.0, y + 4.0, t * 100.0);
    }
    for (j, bar) in bars.iter().enumerate() {
        let x = LEFT + gap / 2.0 + j as f64 * (bar_w + gap);
        let mut y = base;
        for (i, share) in bar.shares.iter().enumerate() {
            let h = share * ph;
            if h <= 0.0 {
                continue;
            }
            y -= h;
            let _ = writeln!(
                out,
                r#"<rect x="{x:.2}" y="{y:.2}" width="{bar_w}" height="{h:.2}" fill="{}"/>"#,
                label_color(&labels[i])
            );
        }
        if bar.highlight {
            let _ = writeln!(
                out,
                r#"<rect x="{x:.2}" y="{TOP:.2}" width="{bar_w}" height="{ph:.2}" fill="none" stroke="black" stroke-width="2"/>"#
            );
        }
        let tx = x + bar_w / 2.0;
        let ty = base + 10.0;
        let _ = writeln!(
            out,
            r#"<text x="{tx:.2}" y="{ty:.2}" font-size="10" text-anchor="end" transform="rotate(-60 {tx:.2} {ty:.2})">{}</text>"#,
            escape(&bar.name)
        );
    }
    for (i, label) in labels.iter().enumerate() {
        let ly = TOP + 10.0 + 20.0 * i as f64;
        let lx = width - RIGHT + 20.0;
        let _ = writeln!(out, r#"<rect x="{lx}" y="{}" width="10" height="10" fill="{}"/>"#, ly - 5.0, label_color(label));
        let _ = writeln!(out, r#"<text x="{}" y="{}">{}</text>"#, lx + 16.0, ly + 4.0, escape(label));
    }
    out.push_str("</svg>\n");
    out
}
