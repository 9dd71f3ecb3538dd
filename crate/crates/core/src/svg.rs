//! Standalone SVG figures: site maps, traces and boxplots.

use std::fmt::Write;

use crate::model::quantile;

const PANEL: f64 = 320.0;
const MARGIN: f64 = 40.0;

fn header(w: f64, h: f64) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\" font-family=\"sans-serif\" font-size=\"11\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    )
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Blue-white-red scale for `t` in [-1, 1].
fn diverging(t: f64) -> String {
    let t = if t.is_finite() { t.clamp(-1.0, 1.0) } else { 0.0 };
    let (r, g, b) = if t < 0.0 {
        let u = -t;
        (255.0 * (1.0 - u) + 33.0 * u, 255.0 * (1.0 - u) + 102.0 * u, 255.0 * (1.0 - u) + 172.0 * u)
    } else {
        (255.0 * (1.0 - t) + 178.0 * t, 255.0 * (1.0 - t) + 24.0 * t, 255.0 * (1.0 - t) + 43.0 * t)
    };
    format!("rgb({},{},{})", r.round() as u8, g.round() as u8, b.round() as u8)
}

fn extent(v: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = v.filter(|x| x.is_finite()).fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
    if !lo.is_finite() {
        (0.0, 1.0)
    } else if hi - lo < 1e-12 {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

/// Side-by-side maps of site values sharing one symmetric colour scale.
pub fn site_maps(title: &str, coords: &[[f64; 2]], panels: &[(String, Vec<f64>)]) -> String {
    let (x0, x1) = extent(coords.iter().map(|c| c[0]));
    let (y0, y1) = extent(coords.iter().map(|c| c[1]));
    let scale = (PANEL / (x1 - x0)).min(PANEL / (y1 - y0));
    let amax = panels.iter().flat_map(|(_, v)| v.iter()).filter(|v| v.is_finite()).fold(0.0_f64, |a, v| a.max(v.abs())).max(1e-12);
    let w = MARGIN + panels.len().max(1) as f64 * (PANEL + MARGIN) + 60.0;
    let h = PANEL + 2.5 * MARGIN;
    let mut s = header(w, h);
    let _ = writeln!(s, "<text x=\"{}\" y=\"18\" font-size=\"14\">{}</text>", MARGIN, escape(title));
    for (p, (name, vals)) in panels.iter().enumerate() {
        let ox = MARGIN + p as f64 * (PANEL + MARGIN);
        let oy = 1.5 * MARGIN;
        let _ = writeln!(s, "<text x=\"{ox}\" y=\"{}\">{}</text>", oy - 6.0, escape(name));
        let _ = writeln!(s, "<rect x=\"{ox}\" y=\"{oy}\" width=\"{PANEL}\" height=\"{PANEL}\" fill=\"none\" stroke=\"#999\"/>");
        for (c, v) in coords.iter().zip(vals) {
            let cx = ox + (c[0] - x0) * scale;
            let cy = oy + PANEL - (c[1] - y0) * scale;
            let _ = writeln!(s, "<circle cx=\"{cx:.2}\" cy=\"{cy:.2}\" r=\"4\" fill=\"{}\" stroke=\"#555\" stroke-width=\"0.3\"/>", diverging(v / amax));
        }
    }
    // colour bar
    let bx = w - 50.0;
    let by = 1.5 * MARGIN;
    for i in 0..50 {
        let t = 1.0 - 2.0 * i as f64 / 49.0;
        let _ = writeln!(s, "<rect x=\"{bx}\" y=\"{:.2}\" width=\"12\" height=\"{:.2}\" fill=\"{}\"/>", by + i as f64 * PANEL / 50.0, PANEL / 50.0 + 0.5, diverging(t));
    }
    let _ = writeln!(s, "<text x=\"{}\" y=\"{}\">{:.3}</text>", bx + 14.0, by + 8.0, amax);
    let _ = writeln!(s, "<text x=\"{}\" y=\"{}\">{:.3}</text>", bx + 14.0, by + PANEL, -amax);
    s.push_str("</svg>\n");
    s
}

/// Line plot of one or more traces against iteration.
pub fn traces(title: &str, series: &[(String, Vec<f64>)]) -> String {
    let (w, h) = (640.0, 260.0);
    let (pw, ph) = (w - 2.0 * MARGIN, h - 2.0 * MARGIN);
    let len = series.iter().map(|(_, v)| v.len()).max().unwrap_or(0).max(2);
    let (lo, hi) = extent(series.iter().flat_map(|(_, v)| v.iter().copied()));
    let mut s = header(w, h);
    let _ = writeln!(s, "<text x=\"{MARGIN}\" y=\"18\" font-size=\"14\">{}</text>", escape(title));
    let _ = writeln!(s, "<rect x=\"{MARGIN}\" y=\"{MARGIN}\" width=\"{pw}\" height=\"{ph}\" fill=\"none\" stroke=\"#999\"/>");
    let palette = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];
    for (k, (name, v)) in series.iter().enumerate() {
        let step = (v.len() / 2000).max(1);
        let mut pts = String::new();
        for (i, y) in v.iter().enumerate().step_by(step) {
            let px = MARGIN + i as f64 / (len - 1) as f64 * pw;
            let py = MARGIN + ph - (y - lo) / (hi - lo) * ph;
            let _ = write!(pts, "{px:.1},{py:.1} ");
        }
        let col = palette[k % palette.len()];
        let _ = writeln!(s, "<polyline points=\"{}\" fill=\"none\" stroke=\"{col}\" stroke-width=\"0.8\"/>", pts.trim_end());
        let _ = writeln!(s, "<text x=\"{}\" y=\"{}\" fill=\"{col}\">{}</text>", w - MARGIN - 120.0, MARGIN + 14.0 * (k + 1) as f64, escape(name));
    }
    let _ = writeln!(s, "<text x=\"4\" y=\"{}\">{:.3}</text>", MARGIN + 4.0, hi);
    let _ = writeln!(s, "<text x=\"4\" y=\"{}\">{:.3}</text>", MARGIN + ph, lo);
    s.push_str("</svg>\n");
    s
}

/// Boxplots (quartile box, 1.5 IQR whiskers, outlying points) per group.
pub fn boxplots(title: &str, groups: &[(String, Vec<f64>)]) -> String {
    let bw = 90.0;
    let w = 2.0 * MARGIN + groups.len().max(1) as f64 * bw + 20.0;
    let h = 300.0;
    let ph = h - 2.5 * MARGIN;
    let (lo, hi) = extent(groups.iter().flat_map(|(_, v)| v.iter().copied()));
    let y = |v: f64| MARGIN + ph - (v - lo) / (hi - lo) * ph;
    let mut s = header(w, h);
    let _ = writeln!(s, "<text x=\"{MARGIN}\" y=\"18\" font-size=\"14\">{}</text>", escape(title));
    let _ = writeln!(s, "<line x1=\"{MARGIN}\" y1=\"{MARGIN}\" x2=\"{MARGIN}\" y2=\"{}\" stroke=\"#333\"/>", MARGIN + ph);
    let _ = writeln!(s, "<text x=\"2\" y=\"{}\">{:.2}</text>", MARGIN + 4.0, hi);
    let _ = writeln!(s, "<text x=\"2\" y=\"{}\">{:.2}</text>", MARGIN + ph, lo);
    for (g, (name, vals)) in groups.iter().enumerate() {
        let cx = MARGIN + 20.0 + g as f64 * bw + bw / 2.0;
        let mut v: Vec<f64> = vals.iter().copied().filter(|x| x.is_finite()).collect();
        let _ = writeln!(s, "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>", cx, h - MARGIN / 2.0, escape(name));
        if v.is_empty() {
            continue;
        }
        v.sort_by(f64::total_cmp);
        let (q1, q2, q3) = (quantile(&v, 0.25), quantile(&v, 0.5), quantile(&v, 0.75));
        let iqr = q3 - q1;
        let wlo = *v.iter().find(|&&x| x >= q1 - 1.5 * iqr).unwrap();
        let whi = *v.iter().rev().find(|&&x| x <= q3 + 1.5 * iqr).unwrap();
        let half = bw * 0.3;
        let _ = writeln!(s, "<line x1=\"{cx}\" y1=\"{:.2}\" x2=\"{cx}\" y2=\"{:.2}\" stroke=\"#333\"/>", y(whi), y(wlo));
        let _ = writeln!(
            s,
            "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"#9ecae1\" stroke=\"#333\"/>",
            cx - half,
            y(q3),
            2.0 * half,
            (y(q1) - y(q3)).max(0.5)
        );
        let _ = writeln!(s, "<line x1=\"{:.2}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" stroke=\"#333\" stroke-width=\"2\"/>", cx - half, y(q2), cx + half, y(q2));
        for &o in v.iter().filter(|&&x| x < wlo || x > whi) {
            let _ = writeln!(s, "<circle cx=\"{cx}\" cy=\"{:.2}\" r=\"2\" fill=\"none\" stroke=\"#333\"/>", y(o));
        }
    }
    s.push_str("</svg>\n");
    s
}
