//! Static SVG figures: fitted trend curve with its band, random-effect
//! heatmap, and per-region fits with predictive intervals.

use std::fmt::Write;

use crate::inference::{CellInterval, CurveBand};

const W: f64 = 640.0;
const H: f64 = 360.0;
const MARGIN: f64 = 48.0;

fn header(out: &mut String, w: f64, h: f64, title: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(out, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(out, r#"<text x="{}" y="18" text-anchor="middle" font-size="14">{}</text>"#, w / 2.0, escape(title));
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ")
}

/// Maps data ranges onto a plot rectangle.
struct Frame {
    x0: f64,
    y0: f64,
    w: f64,
    h: f64,
    t_max: f64,
    y_max: f64,
}

impl Frame {
    fn x(&self, t: f64) -> f64 {
        self.x0 + if self.t_max > 1.0 { (t - 1.0) / (self.t_max - 1.0) * self.w } else { 0.0 }
    }

    fn y(&self, v: f64) -> f64 {
        self.y0 + self.h - (v / self.y_max).clamp(0.0, 1.0) * self.h
    }

    fn axes(&self, out: &mut String) {
        let (x1, y1) = (self.x0 + self.w, self.y0 + self.h);
        let _ = writeln!(
            out,
            r#"<path d="M{} {} V{y1} H{x1}" stroke="black" fill="none"/>"#,
            self.x0, self.y0
        );
        let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#, self.x0 - 4.0, self.y0 + 4.0, fmt_tick(self.y_max));
        let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="end">0</text>"#, self.x0 - 4.0, y1);
        let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="middle">1</text>"#, self.x0, y1 + 14.0);
        let _ = writeln!(out, r#"<text x="{x1}" y="{}" text-anchor="middle">{}</text>"#, y1 + 14.0, self.t_max);
    }

    fn polyline(&self, values: &[f64]) -> String {
        values
            .iter()
            .enumerate()
            .map(|(t, &v)| format!("{:.2},{:.2}", self.x(t as f64 + 1.0), self.y(v)))
            .collect::<Vec<_>>()
            .join(" ")
    }

    fn band(&self, lower: &[f64], upper: &[f64]) -> String {
        let mut pts: Vec<String> = upper
            .iter()
            .enumerate()
            .map(|(t, &v)| format!("{:.2},{:.2}", self.x(t as f64 + 1.0), self.y(v)))
            .collect();
        pts.extend(lower.iter().enumerate().rev().map(|(t, &v)| format!("{:.2},{:.2}", self.x(t as f64 + 1.0), self.y(v))));
        pts.join(" ")
    }
}

fn fmt_tick(v: f64) -> String {
    if v >= 100.0 {
        format!("{v:.0}")
    } else {
        format!("{v:.3}")
    }
}

fn nice_max(v: f64) -> f64 {
    if !(v > 0.0) || !v.is_finite() {
        return 1.0;
    }
    let e = 10f64.powf(v.log10().floor());
    [1.0, 2.0, 2.5, 5.0, 10.0].iter().map(|m| m * e).find(|&m| m >= v).unwrap_or(10.0 * e)
}

/// Fitted trends (weekly cases per 100,000 residents) with pointwise 95%
/// bands, one polygon per curve. Quantiles are kept verbatim in
/// `data-lower` and `data-upper`.
pub fn curve_svg(bands: &[CurveBand], labels: &[String], title: &str) -> String {
    const COLOURS: [&str; 6] = ["#08519c", "#a63603", "#006d2c", "#54278f", "#a50f15", "#252525"];
    let mut out = String::new();
    header(&mut out, W, H, title);
    let f = Frame {
        x0: MARGIN + 16.0,
        y0: MARGIN,
        w: W - 2.0 * MARGIN - 16.0,
        h: H - 2.0 * MARGIN,
        t_max: bands.first().map_or(1, |b| b.mean.len()) as f64,
        y_max: nice_max(bands.iter().flat_map(|b| b.upper.iter().copied()).fold(0.0, f64::max)),
    };
    f.axes(&mut out);
    let opacity = if bands.len() > 1 { 0.25 } else { 0.6 };
    for (k, band) in bands.iter().enumerate() {
        let colour = COLOURS[k % COLOURS.len()];
        let _ = writeln!(
            out,
            r#"<polygon class="band" data-curve="{}" points="{}" fill="{colour}" fill-opacity="{opacity}" stroke="none" data-lower="{}" data-upper="{}"/>"#,
            band.curve,
            f.band(&band.lower, &band.upper),
            join(&band.lower),
            join(&band.upper)
        );
        let _ = writeln!(
            out,
            r#"<polyline class="mean" points="{}" fill="none" stroke="{colour}" stroke-width="2" data-values="{}"/>"#,
            f.polyline(&band.mean),
            join(&band.mean)
        );
        if let Some(label) = labels.get(k).filter(|_| bands.len() > 1) {
            let _ = writeln!(
                out,
                r#"<text x="{}" y="{}" fill="{colour}">{}</text>"#,
                f.x0 + f.w - 120.0,
                f.y0 + 12.0 * (k as f64 + 1.0),
                escape(label)
            );
        }
    }
    let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="middle">week</text>"#, f.x0 + f.w / 2.0, H - 10.0);
    out.push_str("</svg>\n");
    out
}

fn diverging(v: f64, scale: f64) -> String {
    let u = if scale > 0.0 { (v / scale).clamp(-1.0, 1.0) } else { 0.0 };
    let (r, g, b) = if u >= 0.0 {
        (255.0, 255.0 * (1.0 - u), 255.0 * (1.0 - u))
    } else {
        (255.0 * (1.0 + u), 255.0 * (1.0 + u), 255.0)
    };
    format!("rgb({},{},{})", r.round(), g.round(), b.round())
}

/// Region × week heatmap of `values[g][t]` on a symmetric diverging scale.
pub fn heatmap_svg(values: &[Vec<f64>], regions: &[String], title: &str) -> String {
    let g_n = values.len();
    let t_n = values.first().map_or(0, Vec::len);
    let cell = 16.0;
    let label_w = 8.0 + 7.0 * regions.iter().map(|r| r.chars().count()).max().unwrap_or(0) as f64;
    let w = label_w + cell * t_n as f64 + 2.0 * MARGIN;
    let h = MARGIN + cell * g_n as f64 + MARGIN;
    let scale = values.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut out = String::new();
    header(&mut out, w, h, title);
    let x0 = MARGIN + label_w;
    let _ = writeln!(out, r#"<g class="heatmap" data-rows="{g_n}" data-cols="{t_n}">"#);
    for (g, row) in values.iter().enumerate() {
        let y = MARGIN + g as f64 * cell;
        for (t, &v) in row.iter().enumerate() {
            let _ = writeln!(
                out,
                r#"<rect class="cell" x="{}" y="{y}" width="{cell}" height="{cell}" fill="{}" data-value="{v}"/>"#,
                x0 + t as f64 * cell,
                diverging(v, scale)
            );
        }
    }
    out.push_str("</g>\n");
    for (g, name) in regions.iter().enumerate().take(g_n) {
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#,
            x0 - 4.0,
            MARGIN + (g as f64 + 0.7) * cell,
            escape(name)
        );
    }
    for t in (0..t_n).filter(|t| t % 4 == 0) {
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
            x0 + (t as f64 + 0.5) * cell,
            h - MARGIN + 14.0,
            t + 1
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" text-anchor="end">scale ±{}</text>"#,
        w - 4.0,
        h - 6.0,
        fmt_tick(scale)
    );
    out.push_str("</svg>\n");
    out
}

/// Small multiples of observed counts against predictive means and 95%
/// intervals. Held-out cells are drawn as open circles.
pub fn region_fit_svg(
    regions: &[String],
    counts: &[Vec<u64>],
    intervals: &[Vec<CellInterval>],
    held_out: Option<&[Vec<bool>]>,
    title: &str,
) -> String {
    let n = regions.len();
    let cols = (n as f64).sqrt().ceil().max(1.0) as usize;
    let rows = n.div_ceil(cols).max(1);
    let (pw, ph) = (220.0, 150.0);
    let (w, h) = (cols as f64 * pw + 2.0 * MARGIN, rows as f64 * ph + 2.0 * MARGIN);
    let mut out = String::new();
    header(&mut out, w, h, title);
    for g in 0..n {
        let (c, r) = (g % cols, g / cols);
        let obs: Vec<f64> = counts[g].iter().map(|&v| v as f64).collect();
        let upper: Vec<f64> = intervals[g].iter().map(|i| i.upper).collect();
        let lower: Vec<f64> = intervals[g].iter().map(|i| i.lower).collect();
        let mean: Vec<f64> = intervals[g].iter().map(|i| i.mean).collect();
        let f = Frame {
            x0: MARGIN + c as f64 * pw + 36.0,
            y0: MARGIN + r as f64 * ph + 16.0,
            w: pw - 52.0,
            h: ph - 44.0,
            t_max: obs.len() as f64,
            y_max: nice_max(upper.iter().chain(&obs).copied().fold(0.0, f64::max)),
        };
        let _ = writeln!(out, r#"<g class="region" data-region="{}">"#, escape(&regions[g]));
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
            f.x0 + f.w / 2.0,
            f.y0 - 4.0,
            escape(&regions[g])
        );
        f.axes(&mut out);
        let _ = writeln!(
            out,
            r##"<polygon class="interval" points="{}" fill="#fdae6b" fill-opacity="0.5" stroke="none"/>"##,
            f.band(&lower, &upper)
        );
        let _ = writeln!(
            out,
            r##"<polyline points="{}" fill="none" stroke="#d94801" stroke-width="1.5"/>"##,
            f.polyline(&mean)
        );
        for (t, &v) in obs.iter().enumerate() {
            let hidden = held_out.is_some_and(|m| m[g][t]);
            let _ = writeln!(
                out,
                r#"<circle cx="{:.2}" cy="{:.2}" r="2" fill="{}" stroke="black" stroke-width="0.8"/>"#,
                f.x(t as f64 + 1.0),
                f.y(v),
                if hidden { "white" } else { "black" }
            );
        }
        out.push_str("</g>\n");
    }
    out.push_str("</svg>\n");
    out
}
