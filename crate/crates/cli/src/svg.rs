//! Minimal hand-written SVG charts.

use std::fmt::Write as _;

const W: f64 = 640.0;
const H: f64 = 360.0;
const MARGIN: f64 = 48.0;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn open(out: &mut String, title: &str) {
    let _ = writeln!(out, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#);
    let _ = writeln!(out, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(out, r#"<text x="{}" y="24" font-size="16" text-anchor="middle">{}</text>"#, W / 2.0, escape(title));
}

fn axes(out: &mut String, x_label: &str, y_label: &str) {
    let (x0, y0, x1, y1) = (MARGIN, H - MARGIN, W - MARGIN / 2.0, MARGIN);
    let _ = writeln!(out, r#"<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/>"#);
    let _ = writeln!(out, r#"<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>"#);
    let _ = writeln!(out, r#"<text x="{}" y="{}" font-size="12" text-anchor="middle">{}</text>"#, (x0 + x1) / 2.0, H - 12.0, escape(x_label));
    let _ = writeln!(
        out,
        r#"<text x="14" y="{}" font-size="12" text-anchor="middle" transform="rotate(-90 14 {})">{}</text>"#,
        H / 2.0,
        H / 2.0,
        escape(y_label)
    );
}

fn span(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in values.filter(|v| v.is_finite()) {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        return (lo - 0.5, hi + 0.5);
    }
    (lo, hi)
}

/// Polyline of `ys` against `xs`, with an optional marked x position.
pub fn line_plot(title: &str, x_label: &str, y_label: &str, xs: &[f64], ys: &[f64], mark: Option<f64>) -> String {
    let mut out = String::new();
    open(&mut out, title);
    axes(&mut out, x_label, y_label);
    let (xl, xh) = span(xs.iter().copied());
    let (yl, yh) = span(ys.iter().copied());
    let px = |x: f64| MARGIN + (x - xl) / (xh - xl) * (W - 1.5 * MARGIN);
    let py = |y: f64| H - MARGIN - (y - yl) / (yh - yl) * (H - 2.0 * MARGIN);
    let points: Vec<String> = xs
        .iter()
        .zip(ys)
        .filter(|(_, y)| y.is_finite())
        .map(|(&x, &y)| format!("{:.2},{:.2}", px(x), py(y)))
        .collect();
    let _ = writeln!(out, r#"<polyline fill="none" stroke="steelblue" stroke-width="2" points="{}"/>"#, points.join(" "));
    if let Some(m) = mark {
        let x = px(m);
        let _ = writeln!(out, r#"<line class="mark" x1="{x:.2}" y1="{}" x2="{x:.2}" y2="{MARGIN}" stroke="crimson" stroke-dasharray="4 3"/>"#, H - MARGIN);
        let _ = writeln!(out, r#"<text x="{x:.2}" y="{}" font-size="11" fill="crimson">{m:.4}</text>"#, MARGIN - 4.0);
    }
    let _ = writeln!(out, r#"<text x="{MARGIN}" y="{}" font-size="10">{xl:.3}</text>"#, H - MARGIN + 14.0);
    let _ = writeln!(out, r#"<text x="{}" y="{}" font-size="10" text-anchor="end">{xh:.3}</text>"#, W - MARGIN / 2.0, H - MARGIN + 14.0);
    let _ = writeln!(out, r#"<text x="{}" y="{}" font-size="10" text-anchor="end">{yh:.3}</text>"#, MARGIN - 4.0, MARGIN + 4.0);
    let _ = writeln!(out, r#"<text x="{}" y="{}" font-size="10" text-anchor="end">{yl:.3}</text>"#, MARGIN - 4.0, H - MARGIN);
    out.push_str("</svg>\n");
    out
}

/// One row per motif over a frame timeline; each occurrence is a bar.
/// `motifs` holds `(length, [(start, end)])` with 1-based inclusive spans.
pub fn motif_timeline(title: &str, frames: usize, motifs: &[(usize, Vec<(usize, usize)>)]) -> String {
    let mut out = String::new();
    open(&mut out, title);
    axes(&mut out, "frame", "motif");
    let frames = frames.max(1) as f64;
    let row_h = ((H - 2.0 * MARGIN) / motifs.len().max(1) as f64).min(28.0);
    let px = |f: f64| MARGIN + f / frames * (W - 1.5 * MARGIN);
    for (i, (len, spans)) in motifs.iter().enumerate() {
        let y = MARGIN + i as f64 * row_h;
        let _ = writeln!(out, r#"<g class="motif" data-motif="{i}" data-length="{len}" data-occurrences="{}">"#, spans.len());
        for &(a, b) in spans {
            let (x0, x1) = (px(a as f64 - 1.0), px(b as f64));
            let _ = writeln!(
                out,
                r#"<rect class="occurrence" x="{x0:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="hsl({}, 60%, 55%)"/>"#,
                y + 2.0,
                (x1 - x0).max(1.0),
                row_h - 4.0,
                (i * 47) % 360
            );
        }
        out.push_str("</g>\n");
    }
    let _ = writeln!(out, r#"<text x="{}" y="{}" font-size="10" text-anchor="end">{}</text>"#, W - MARGIN / 2.0, H - MARGIN + 14.0, frames);
    out.push_str("</svg>\n");
    out
}

/// Mean bars with `±err` whiskers.
pub fn bar_chart(title: &str, y_label: &str, bars: &[(String, f64, f64)], y_max: f64) -> String {
    let mut out = String::new();
    open(&mut out, title);
    axes(&mut out, "model", y_label);
    let top = bars.iter().map(|(_, m, e)| m + e).fold(y_max, f64::max).max(1e-12);
    let py = |y: f64| H - MARGIN - y.max(0.0) / top * (H - 2.0 * MARGIN);
    let slot = (W - 1.5 * MARGIN) / bars.len().max(1) as f64;
    for (i, (name, mean, err)) in bars.iter().enumerate() {
        let cx = MARGIN + (i as f64 + 0.5) * slot;
        let bw = slot * 0.5;
        let _ = writeln!(
            out,
            r#"<rect class="bar" x="{:.2}" y="{:.2}" width="{bw:.2}" height="{:.2}" fill="steelblue"/>"#,
            cx - bw / 2.0,
            py(*mean),
            py(0.0) - py(*mean)
        );
        let (lo, hi) = (py(mean - err), py(mean + err));
        let _ = writeln!(out, r#"<line class="error" x1="{cx:.2}" y1="{lo:.2}" x2="{cx:.2}" y2="{hi:.2}" stroke="black"/>"#);
        for y in [lo, hi] {
            let _ = writeln!(out, r#"<line x1="{:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="black"/>"#, cx - 6.0, cx + 6.0);
        }
        let _ = writeln!(out, r#"<text x="{cx:.2}" y="{}" font-size="12" text-anchor="middle">{}</text>"#, H - MARGIN + 16.0, escape(name));
        let _ = writeln!(out, r#"<text x="{cx:.2}" y="{:.2}" font-size="10" text-anchor="middle">{mean:.3}</text>"#, hi - 4.0);
    }
    out.push_str("</svg>\n");
    out
}
